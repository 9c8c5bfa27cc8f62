// Copyright 2026 The xregion Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xregion/pipeline.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "xregion/log.hpp"

namespace xregion {
namespace {

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("config paths.") + what + " is not set");
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string("input file not found: ") + p.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// Keeps the header and the meta records up to `epoch`.
void truncate_log(const std::filesystem::path& path, int epoch) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read training log " + path.string() + " for resume");
  std::stringstream kept;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.value("record", "") == "header" ||
        (j.value("phase", "") == "meta" && j.value("epoch", 0) <= epoch)) {
      kept << line << '\n';
    }
  }
  in.close();
  write_text(path, kept.str());
}

struct LoadedModel {
  PreparedPair data;
  std::unique_ptr<RegionContext> source;
  std::unique_ptr<RegionContext> target;
};

LoadedModel load_contexts(const RunConfig& config) {
  LoadedModel m{prepare_from_files(config), nullptr, nullptr};
  m.source = std::make_unique<RegionContext>(m.data.source.graph, config.train.model);
  m.target = std::make_unique<RegionContext>(m.data.target.graph, config.train.model,
                                             &m.data.target.split.validation);
  return m;
}

}  // namespace

PreparedRegion prepare_region(const RegionDataset& raw, const FilterThresholds& thresholds,
                              const SplitFractions& fractions, const KernelConfig& kernel) {
  PreparedRegion r{filter_region(raw, thresholds), {}, {}};
  r.split = temporal_split(r.filtered, fractions);
  r.graph = MobilityGraph::build(r.split.train, kernel);
  return r;
}

PreparedPair prepare_from_files(const RunConfig& config) {
  const PathConfig& p = config.paths;
  require_file(p.source_checkins, "source_checkins");
  require_file(p.source_social, "source_social");
  require_file(p.target_checkins, "target_checkins");
  require_file(p.target_social, "target_social");
  auto load = [&](const std::filesystem::path& checkins, const std::filesystem::path& social, RegionTag tag,
                  const FilterThresholds& f) {
    RegionDataset raw = make_region(parse_checkins(checkins), parse_social(social), tag);
    return prepare_region(raw, f, config.split, config.kernel);
  };
  PreparedPair pair{load(p.source_checkins, p.source_social, RegionTag::kSource, config.source_filter),
                    load(p.target_checkins, p.target_social, RegionTag::kTarget, config.target_filter)};
  check_disjoint(pair.source.filtered, pair.target.filtered);
  return pair;
}

std::string region_summary_json(const PreparedRegion& r) {
  nlohmann::ordered_json j;
  j["users"] = r.graph.num_users();
  j["pois"] = r.graph.num_pois();
  j["categories"] = r.graph.num_categories();
  j["checkins"] = r.filtered.checkins.size();
  j["train_checkins"] = r.split.train.checkins.size();
  j["validation_checkins"] = r.split.validation.checkins.size();
  j["test_checkins"] = r.split.test.checkins.size();
  j["social_edges"] = r.graph.social_edges().size();
  j["location_edges"] = r.graph.location_edges().size();
  j["user_poi_pairs"] = r.graph.visits().size();
  return j.dump();
}

void cmd_build_graph(const RunConfig& config) {
  const PreparedPair pair = prepare_from_files(config);
  const auto& dir = config.paths.output_dir;
  std::filesystem::create_directories(dir);
  pair.source.graph.save(dir / "source.graph");
  pair.target.graph.save(dir / "target.graph");
  nlohmann::ordered_json j;
  j["source"] = nlohmann::ordered_json::parse(region_summary_json(pair.source));
  j["target"] = nlohmann::ordered_json::parse(region_summary_json(pair.target));
  write_text(dir / "graph_summary.json", j.dump(2) + "\n");
}

void cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& resume) {
  LoadedModel m = load_contexts(config);
  const auto& dir = config.paths.output_dir;
  std::filesystem::create_directories(dir);
  const auto log_path = dir / "train_log.jsonl";

  std::optional<Checkpoint> ck;
  if (resume) {
    ck = Checkpoint::load(*resume);
    truncate_log(log_path, ck->epoch);
  }
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write " + log_path.string());
  write_text(dir / "config.json", config_json(config) + "\n");

  TrainHooks hooks;
  hooks.checkpoint_dir = dir / "checkpoints";
  hooks.log = &log;
  hooks.resume = ck ? &*ck : nullptr;
  const TrainResult result = train(*m.source, *m.target, config.train, hooks);

  const DrawPlan plan(config.train, *m.source, *m.target);
  const ModelScorer scorer(m.target->model(), result.state.target, result.state.target_emb,
                           plan.eval_samples(RegionTag::kTarget));
  const MetricsReport report = evaluate(scorer, m.data.target.graph, m.data.target.split.test, config.eval);
  write_report(report, dir / "report_test.json", config.eval.per_user ? dir / "report_test_users.tsv" : "");
}

void cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::string& which) {
  if (which != "test" && which != "validation") throw ConfigError("--split must be test or validation");
  LoadedModel m = load_contexts(config);
  const Checkpoint ck = Checkpoint::load(checkpoint);
  const DrawPlan plan(config.train, *m.source, *m.target);
  const ModelScorer scorer(m.target->model(), ck.state.target, ck.state.target_emb,
                           plan.eval_samples(RegionTag::kTarget));
  const auto& heldout = which == "test" ? m.data.target.split.test : m.data.target.split.validation;
  const MetricsReport report = evaluate(scorer, m.data.target.graph, heldout, config.eval);
  const auto& dir = config.paths.output_dir;
  std::filesystem::create_directories(dir);
  write_report(report, dir / ("report_" + which + ".json"),
               config.eval.per_user ? dir / ("report_" + which + "_users.tsv") : "");
}

void cmd_recommend(const RunConfig& config, const std::filesystem::path& checkpoint,
                   const std::string& user_id, int k, std::ostream& out) {
  if (k < 1) throw ConfigError("k must be >= 1");
  LoadedModel m = load_contexts(config);
  const Checkpoint ck = Checkpoint::load(checkpoint);
  const MobilityGraph& graph = m.data.target.graph;
  const auto u = graph.find_user(user_id);
  if (!u) throw Error("cold start unresolvable: unknown user '" + user_id + "' has no social edges");
  const DrawPlan plan(config.train, *m.source, *m.target);
  const ModelScorer scorer(m.target->model(), ck.state.target, ck.state.target_emb,
                           plan.eval_samples(RegionTag::kTarget));
  const RowVector uf = scorer.user_vector(*u);
  const auto scores = m.target->model().score_all(ck.state.target, scorer.outputs(), uf);
  const auto& seen = graph.visited(*u);
  const auto top = rank_topk(scores, std::vector<PoiIndex>(seen.begin(), seen.end()), static_cast<std::size_t>(k));
  out.precision(17);
  for (std::size_t i = 0; i < top.size(); ++i) {
    out << i + 1 << '\t' << graph.pois()[static_cast<std::size_t>(top[i])].poi_id << '\t'
        << scores[static_cast<std::size_t>(top[i])] << '\n';
  }
}

void cmd_gen_synth(const RunConfig& config) {
  SynthSpec spec = config.synth;
  spec.seed = config.train.seed;
  const SynthOutput out = generate(spec);
  write_synthetic(out, spec, config.paths.output_dir);
}

}  // namespace xregion

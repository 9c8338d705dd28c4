#include "hedge/sweep.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "hedge/commands.hpp"
#include "hedge/metrics.hpp"

namespace hedge::sweep {

using nlohmann::json;

namespace {

std::map<std::string, std::string> to_kv_map(const json& j) {
  std::map<std::string, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const json& v = it.value();
    out[it.key()] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return out;
}

}  // namespace

Manifest Manifest::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  Manifest m;
  m.corpus_dir = j.value("corpus_dir", "");
  m.out_dir = j.value("out_dir", "");
  if (m.corpus_dir.empty()) throw ConfigError("manifest: corpus_dir is required");
  if (m.out_dir.empty()) throw ConfigError("manifest: out_dir is required");
  if (j.contains("defaults")) m.defaults = to_kv_map(j.at("defaults"));
  if (!j.contains("runs") || j.at("runs").empty())
    throw ConfigError("manifest: no runs given");
  for (const auto& rj : j.at("runs")) {
    RunSpec r;
    r.preset = rj.at("preset").get<std::string>();
    r.name = rj.value("name", r.preset);
    if (rj.contains("embeddings"))
      for (auto it = rj.at("embeddings").begin(); it != rj.at("embeddings").end(); ++it)
        r.embeddings.emplace_back(it.key(), it.value().get<std::string>());
    if (rj.contains("config")) r.config = to_kv_map(rj.at("config"));
    if (rj.contains("seeds")) {
      r.seeds.clear();
      for (const auto& s : rj.at("seeds")) r.seeds.push_back(s.get<std::uint64_t>());
      if (r.seeds.empty()) throw ConfigError("manifest: run " + r.name + " has no seeds");
    }
    m.runs.push_back(std::move(r));
  }
  return m;
}

Manifest Manifest::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifest: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

RunRow aggregate_row(const std::string& run,
                     const std::vector<std::pair<std::string, double>>& scores) {
  RunRow row;
  row.run = run;
  row.scores = scores;
  std::vector<double> vals;
  vals.reserve(scores.size());
  for (const auto& [label, v] : scores) vals.push_back(v);
  auto [mean, sd] = metrics::mean_std(vals);
  row.mean = mean;
  row.stddev = sd;
  return row;
}

std::string SweepReport::to_json() const {
  json j;
  auto cells_j = json::array();
  for (const auto& c : cells) {
    json cj;
    cj["run"] = c.run;
    cj["embedding"] = c.embedding;
    cj["seed"] = c.seed;
    cj["eval_f1"] = c.eval_f1;
    cj["failed"] = c.failed;
    if (c.failed) cj["error"] = c.error;
    cells_j.push_back(cj);
  }
  j["cells"] = cells_j;
  auto rows_j = json::array();
  for (const auto& r : rows) {
    json rj;
    rj["run"] = r.run;
    for (const auto& [label, v] : r.scores) rj["scores"][label] = v;
    rj["mean"] = r.mean;
    rj["std"] = r.stddev;
    rows_j.push_back(rj);
  }
  j["rows"] = rows_j;
  j["any_failed"] = any_failed;
  return j.dump(2);
}

std::string SweepReport::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::setw(28) << std::left << r.run << " |";
    for (const auto& [label, v] : r.scores)
      os << ' ' << label << '=' << std::setw(6) << v;
    os << " | mean=" << r.mean << " std=" << r.stddev << '\n';
  }
  return os.str();
}

SweepReport run_sweep(const Manifest& manifest, std::ostream& log) {
  SweepReport report;
  cli::LoadedCorpus data = cli::load_corpus_dir(manifest.corpus_dir, true);
  if (data.eval_set.empty())
    throw ContractError("sweep: " + manifest.corpus_dir + " has no eval split");

  for (const auto& run : manifest.runs) {
    model::ModelSpec probe = model::preset(run.preset);
    std::vector<std::pair<std::string, std::string>> columns = run.embeddings;
    if (columns.empty()) {
      if (probe.uses_words())
        throw ConfigError("manifest: run " + run.name +
                          " needs embeddings for preset " + run.preset);
      columns.emplace_back("-", "");
    }

    std::vector<std::pair<std::string, double>> scores;
    for (const auto& [label, emb_path] : columns) {
      std::vector<double> per_seed;
      for (std::uint64_t seed : run.seeds) {
        CellResult cell;
        cell.run = run.name;
        cell.embedding = label;
        cell.seed = seed;
        try {
          model::ModelSpec spec = model::preset(run.preset);
          train::TrainConfig cfg;
          cfg.seed = seed;
          cli::apply_config_map(manifest.defaults, spec, cfg);
          cli::apply_config_map(run.config, spec, cfg);
          log << "[sweep] " << run.name << " / " << label << " / seed " << seed
              << "\n";
          cli::RunOutcome outcome =
              cli::run_training(spec, cfg, data, emb_path, log);
          if (outcome.result.diverged)
            throw TrainingDiverged(outcome.result.message);
          metrics::MetricsReport rep =
              cli::evaluate_model(outcome.model, data.eval_set);
          cell.eval_f1 = rep.f1_x100();
          per_seed.push_back(cell.eval_f1);
          log << "[sweep]   eval F1 " << cell.eval_f1 << "\n";
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
          report.any_failed = true;
          log << "[sweep]   FAILED: " << e.what() << "\n";
        }
        report.cells.push_back(cell);
      }
      if (!per_seed.empty())
        scores.emplace_back(label, metrics::mean_std(per_seed).first);
    }
    if (!scores.empty()) report.rows.push_back(aggregate_row(run.name, scores));
  }
  return report;
}

}  // namespace hedge::sweep

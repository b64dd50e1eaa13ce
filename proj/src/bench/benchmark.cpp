#include "derm/benchmark.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

namespace derm::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string sanitize(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                          c == '_'
                      ? c
                      : '_');
  }
  return out;
}

ordered_json scores_to_json(const ScoreVector& scores) {
  ordered_json out = ordered_json::object();
  for (Dimension d : all_dimensions()) {
    if (auto s = scores.get(d)) out[std::string(identifier(d))] = s->value();
  }
  return out;
}

ScoreVector scores_from_json(const json& j) {
  ScoreVector v;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto dim = parse_dimension(it.key());
    if (!dim) raise(ErrorCode::schema, "unknown dimension key '" + it.key() + "'");
    v.set(*dim, Score::from_double(it.value().get<double>()));
  }
  return v;
}

struct CellKey {
  std::string model;
  std::string case_id;
  std::string judge_model;
  std::string prompt_variant;

  ordered_json to_json() const {
    ordered_json j;
    j["model"] = model;
    j["case_id"] = case_id;
    j["judge_model"] = judge_model;
    j["prompt_variant"] = prompt_variant;
    return j;
  }

  bool matches(const json& j) const {
    return j.value("model", "") == model && j.value("case_id", "") == case_id &&
           j.value("judge_model", "") == judge_model &&
           j.value("prompt_variant", "") == prompt_variant;
  }

  std::string filename() const { return sanitize(model) + "__" + sanitize(case_id) + ".json"; }
};

}  // namespace

void write_json_file(const ordered_json& doc, const std::filesystem::path& file) {
  std::error_code ec;
  std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + file.string());
  out << doc.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io, "cannot read " + file.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    raise(ErrorCode::schema, file.string() + ": " + e.what());
  }
}

BenchmarkReport run_benchmark(
    CorpusStore& store,
    const std::vector<std::pair<std::string, backends::Backend*>>& model_backends,
    backends::Backend& judge_backend, const BenchmarkOptions& options) {
  if (model_backends.empty()) {
    raise(ErrorCode::config, "run_benchmark requires at least one model");
  }

  std::vector<const CaseRecord*> bench_cases;
  for (const auto& c : store.cases()) {
    if (c.split == Split::bench) bench_cases.push_back(&c);
  }
  std::sort(bench_cases.begin(), bench_cases.end(),
            [](const CaseRecord* a, const CaseRecord* b) { return a->case_id < b->case_id; });
  for (const auto* c : bench_cases) {
    if (!store.certified_reference(c->case_id)) {
      raise(ErrorCode::config,
            "bench case " + c->case_id + " has no certified reference");
    }
  }

  BenchmarkReport report;
  report.judge_model = judge_backend.config().model_id;
  report.prompt_variant = std::string(textproto::to_string(options.pipeline.judge_variant));

  const std::int64_t calls_before = judge_backend.calls();
  std::int64_t model_calls_before = 0;
  for (const auto& [_, backend] : model_backends) model_calls_before += backend->calls();

  const bool persist = !options.state_dir.empty();
  const auto candidates_dir = options.state_dir / "candidates";
  const auto judgments_dir = options.state_dir / "judgments";

  struct Cell {
    const CaseRecord* case_rec;
    std::string model;
    backends::Backend* backend;
    PerCaseResult row;
  };
  std::vector<Cell> cells;
  for (const auto& [model, backend] : model_backends) {
    for (const auto* c : bench_cases) {
      cells.push_back(Cell{c, model, backend, {}});
    }
  }

  std::mutex store_mu;  // candidate injection from persisted cells
  const auto run_cell = [&](Cell& cell) {
    const CaseRecord& case_rec = *cell.case_rec;
    const CellKey key{cell.model, case_rec.case_id, report.judge_model,
                      report.prompt_variant};
    PerCaseResult& row = cell.row;
    row.model = cell.model;
    row.case_id = case_rec.case_id;

    // Candidate: independent of judge and prompt variant. Reuse the store's
    // narrative when present, then any persisted cell for (model, case).
    std::string narrative_id = candidate_narrative_id(case_rec, cell.model);
    {
      std::lock_guard lk(store_mu);
      if (!store.find_narrative(narrative_id)) narrative_id.clear();
    }
    if (narrative_id.empty() && persist) {
      const auto file = candidates_dir / key.filename();
      if (std::filesystem::exists(file)) {
        const json j = read_json_file(file);
        if (j.value("model", "") == key.model && j.value("case_id", "") == key.case_id &&
            j.contains("narrative")) {
          const auto& n = j["narrative"];
          narrative_id = n.value("narrative_id", "");
          std::lock_guard lk(store_mu);
          if (!store.find_narrative(narrative_id)) {
            NarrativeRecord rec;
            rec.narrative_id = narrative_id;
            rec.case_id = case_rec.case_id;
            rec.source_model = cell.model;
            rec.role = NarrativeRole::candidate;
            rec.stream = Stream::external;
            rec.text = n.value("text", "");
            store.add_narrative(rec, Provenance{cell.model, "candidate_generation",
                                                n.value("fingerprint", "")});
          }
        }
      }
    }
    if (narrative_id.empty()) {
      const auto outcome =
          generate_candidate(store, case_rec, *cell.backend, options.pipeline);
      if (outcome.failure) {
        row.ok = false;
        row.failure_code = outcome.failure->code;
        row.failure_message = outcome.failure->message;
        return;
      }
      narrative_id = *outcome.narrative_id;
      if (persist) {
        const auto* rec = store.find_narrative(narrative_id);
        const auto* prov = store.narrative_provenance(narrative_id);
        ordered_json j;
        j["model"] = key.model;
        j["case_id"] = key.case_id;
        ordered_json n;
        n["narrative_id"] = narrative_id;
        n["text"] = rec->text;
        n["fingerprint"] = prov ? prov->fingerprint : "";
        j["narrative"] = std::move(n);
        write_json_file(j, candidates_dir / key.filename());
      }
    }
    row.narrative_id = narrative_id;

    // Judgment: reuse persisted cell when its key matches.
    if (persist) {
      const auto file = judgments_dir / key.filename();
      if (std::filesystem::exists(file)) {
        const json j = read_json_file(file);
        if (key.matches(j)) {
          row.ok = j.value("ok", false);
          row.scores = scores_from_json(j.value("scores", json::object()));
          row.failure_code = j.value("failure_code", "");
          row.failure_message = j.value("failure_message", "");
          row.judge_fingerprint = j.value("fingerprint", "");
          return;
        }
      }
    }

    const NarrativeRecord* candidate = store.find_narrative(narrative_id);
    const NarrativeRecord* reference = store.certified_reference(case_rec.case_id);
    const auto outcome = judge_pair(*candidate, *reference, judge_backend, options.pipeline);
    row.ok = outcome.ok;
    row.scores = outcome.scores;
    row.judge_fingerprint = outcome.fingerprint;
    if (!outcome.ok) {
      row.failure_code = "judging_failure";
      row.failure_message = outcome.error;
    }
    if (persist) {
      ordered_json j = key.to_json();
      j["ok"] = row.ok;
      j["scores"] = scores_to_json(row.scores);
      j["failure_code"] = row.failure_code;
      j["failure_message"] = row.failure_message;
      j["fingerprint"] = row.judge_fingerprint;
      write_json_file(j, judgments_dir / key.filename());
    }
  };

  if (options.max_parallel > 1) {
    std::atomic<std::size_t> next{0};
    const int workers =
        std::min<int>(options.max_parallel, static_cast<int>(cells.size()));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          run_cell(cells[i]);
        }
      });
    }
    for (auto& t : pool) t.join();
  } else {
    for (auto& cell : cells) run_cell(cell);
  }

  std::map<std::string, std::vector<ScoreVector>> complete_rows;
  for (auto& cell : cells) {
    const PerCaseResult& row = cell.row;
    auto& tally = report.tallies[row.model];
    if (!row.ok) {
      ++tally.failed;
    } else if (row.scores.complete()) {
      ++tally.complete;
      complete_rows[row.model].push_back(row.scores);
    } else {
      ++tally.partial;  // stored with its valid set, excluded from means
    }
    report.per_case.push_back(cell.row);
  }
  if (!complete_rows.empty()) report.per_model = aggregate_model_means(complete_rows);

  report.corpus_hash = store.content_hash();
  std::int64_t model_calls_after = 0;
  for (const auto& [_, backend] : model_backends) model_calls_after += backend->calls();
  report.backend_calls =
      (judge_backend.calls() - calls_before) + (model_calls_after - model_calls_before);
  return report;
}

AlignmentReport alignment_report(std::span<const EvaluationRecord> dermbench_evals,
                                 std::span<const EvaluationRecord> dermeval_evals,
                                 std::span<const EvaluationRecord> physician_evals) {
  if (physician_evals.empty()) {
    raise(ErrorCode::empty_input, "alignment_report requires physician evaluations");
  }
  // Last physician record per narrative wins (revision history may hold more).
  std::map<std::string, const EvaluationRecord*> expert;
  for (const auto& e : physician_evals) {
    validate(e);
    expert[e.narrative_id] = &e;
  }

  AlignmentReport report;
  std::size_t total_pairs = 0;
  const auto add_row = [&](std::string name, std::span<const EvaluationRecord> evals) {
    std::vector<ScoreVector> predicted;
    std::vector<ScoreVector> truth;
    std::map<std::string, const EvaluationRecord*> latest;
    for (const auto& e : evals) latest[e.narrative_id] = &e;
    for (const auto& [narrative_id, rec] : latest) {
      auto it = expert.find(narrative_id);
      if (it == expert.end()) continue;
      predicted.push_back(rec->scores);
      truth.push_back(it->second->scores);
    }
    if (predicted.empty()) {
      raise(ErrorCode::empty_input,
            "no overlapping narrative keys between " + name + " and physician scores");
    }
    total_pairs += predicted.size();
    DimensionTable row;
    for (Dimension d : all_dimensions()) {
      row[d] = mae(predicted, truth, d);
    }
    report.macro[name] = macro_mae(row);
    report.rows[name] = std::move(row);
  };
  add_row("dermbench", dermbench_evals);
  add_row("dermeval", dermeval_evals);
  report.pairs = total_pairs;
  return report;
}

ordered_json report_to_json(const BenchmarkReport& report) {
  ordered_json doc;
  doc["schema"] = "derm.benchmark_report/1";
  ordered_json run;
  run["judge_model"] = report.judge_model;
  run["prompt_variant"] = report.prompt_variant;
  run["corpus_hash"] = report.corpus_hash;
  run["backend_calls"] = report.backend_calls;
  doc["run"] = std::move(run);

  ordered_json per_model = ordered_json::object();
  for (const auto& [model, row] : report.per_model) {
    ordered_json cells = ordered_json::object();
    for (Dimension d : all_dimensions()) {
      cells[std::string(identifier(d))] = format_cell(row.at(d));
    }
    per_model[model] = std::move(cells);
  }
  doc["per_model"] = std::move(per_model);

  ordered_json tallies = ordered_json::object();
  for (const auto& [model, t] : report.tallies) {
    tallies[model] = {{"complete", t.complete}, {"partial", t.partial}, {"failed", t.failed}};
  }
  doc["tallies"] = std::move(tallies);

  ordered_json rows = ordered_json::array();
  for (const auto& row : report.per_case) {
    ordered_json r;
    r["model"] = row.model;
    r["case_id"] = row.case_id;
    r["narrative_id"] = row.narrative_id;
    r["ok"] = row.ok;
    r["scores"] = scores_to_json(row.scores);
    if (!row.failure_code.empty()) {
      r["failure_code"] = row.failure_code;
      r["failure_message"] = row.failure_message;
    }
    r["judge_fingerprint"] = row.judge_fingerprint;
    rows.push_back(std::move(r));
  }
  doc["per_case"] = std::move(rows);
  return doc;
}

ordered_json report_to_json(const AlignmentReport& report) {
  ordered_json doc;
  doc["schema"] = "derm.alignment_report/1";
  if (!report.inputs.empty()) {
    ordered_json run = ordered_json::object();
    for (const auto& [name, digest] : report.inputs) run[name] = digest;
    doc["run"] = {{"inputs", std::move(run)}};
  }
  doc["pairs"] = report.pairs;
  ordered_json rows = ordered_json::object();
  for (const auto& [name, row] : report.rows) {
    ordered_json cells = ordered_json::object();
    for (Dimension d : all_dimensions()) {
      cells[std::string(identifier(d))] = format_cell(row.at(d));
    }
    rows[name] = std::move(cells);
  }
  doc["rows"] = std::move(rows);
  ordered_json macro = ordered_json::object();
  for (const auto& [name, value] : report.macro) {
    macro[name] = format_macro(value);
  }
  doc["macro"] = std::move(macro);
  return doc;
}

void verify_report_consistency(const json& report_json) {
  if (!report_json.contains("per_case") || !report_json.contains("per_model")) {
    raise(ErrorCode::schema, "report lacks per_case/per_model sections");
  }
  std::map<std::string, std::vector<ScoreVector>> complete_rows;
  for (const auto& row : report_json["per_case"]) {
    if (!row.value("ok", false)) continue;
    const ScoreVector v = scores_from_json(row.value("scores", json::object()));
    if (v.complete()) complete_rows[row.value("model", "")].push_back(v);
  }
  const auto recomputed = aggregate_model_means(complete_rows);
  const auto& per_model = report_json["per_model"];
  if (per_model.size() != recomputed.size()) {
    raise(ErrorCode::integrity, "per_model rows do not match per_case rows");
  }
  for (const auto& [model, row] : recomputed) {
    if (!per_model.contains(model)) {
      raise(ErrorCode::integrity, "per_model missing model " + model);
    }
    for (Dimension d : all_dimensions()) {
      const std::string want = format_cell(row.at(d));
      const std::string got = per_model[model].value(std::string(identifier(d)), "");
      if (want != got) {
        raise(ErrorCode::integrity, "report cell mismatch for " + model + "/" +
                                        std::string(identifier(d)) + ": " + got +
                                        " != " + want);
      }
    }
  }
}

}  // namespace derm::bench

#include "derm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "derm/backend.hpp"

namespace derm::bench {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

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

EvaluationRecord evaluation_from_json(const json& j) {
  EvaluationRecord rec;
  rec.narrative_id = j.value("narrative_id", "");
  const auto rater = parse_rater(j.value("rater", ""));
  if (!rater) raise(ErrorCode::schema, "bad rater for evaluation of " + rec.narrative_id);
  rec.rater = *rater;
  rec.scores = scores_from_json(j.value("scores", json::object()));
  rec.rationale = j.value("rationale", "");
  return rec;
}

ordered_json provenance_to_json(const Provenance& p) {
  ordered_json out;
  out["model_id"] = p.model_id;
  out["prompt_id"] = p.prompt_id;
  out["fingerprint"] = p.fingerprint;
  return out;
}

Provenance provenance_from_json(const json& j) {
  return Provenance{j.value("model_id", ""), j.value("prompt_id", ""),
                    j.value("fingerprint", "")};
}

ordered_json case_to_json(const CaseRecord& rec) {
  ordered_json out;
  out["case_id"] = rec.case_id;
  out["image_ref"] = rec.image_ref;
  out["disease_label"] = rec.disease_label;
  out["category"] = rec.category;
  out["split"] = std::string(to_string(rec.split));
  return out;
}

CaseRecord case_from_json(const json& j) {
  CaseRecord rec;
  rec.case_id = j.value("case_id", "");
  rec.image_ref = j.value("image_ref", "");
  rec.disease_label = j.value("disease_label", "");
  rec.category = j.value("category", "");
  const auto split = parse_split(j.value("split", "train"));
  if (!split) raise(ErrorCode::schema, "bad split for case " + rec.case_id);
  rec.split = *split;
  validate(rec);
  return rec;
}

std::vector<std::string> jsonl_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io, "cannot read " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& line, const std::filesystem::path& file, std::size_t n) {
  try {
    return json::parse(line);
  } catch (const std::exception& e) {
    raise(ErrorCode::schema,
          file.string() + ":" + std::to_string(n + 1) + ": " + e.what());
  }
}

std::string trim(std::string s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.erase(s.begin());
  while (!s.empty() && is_space(s.back())) s.pop_back();
  return s;
}

}  // namespace

std::string_view to_string(CertificationState s) {
  switch (s) {
    case CertificationState::draft: return "draft";
    case CertificationState::scored: return "scored";
    case CertificationState::revised: return "revised";
    case CertificationState::certified: return "certified";
  }
  return "draft";
}

CorpusStore::CorpusStore(CorpusStore&& other) noexcept {
  *this = std::move(other);
}

CorpusStore& CorpusStore::operator=(CorpusStore&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lk(mu_, other.mu_);
    cases_ = std::move(other.cases_);
    narratives_ = std::move(other.narratives_);
    evaluations_ = std::move(other.evaluations_);
    narrative_prov_ = std::move(other.narrative_prov_);
    evaluation_prov_ = std::move(other.evaluation_prov_);
    history_ = std::move(other.history_);
    cert_state_ = std::move(other.cert_state_);
  }
  return *this;
}

void CorpusStore::add_case(CaseRecord rec) {
  derm::validate(rec);
  std::lock_guard lk(mu_);
  for (const auto& c : cases_) {
    if (c.case_id == rec.case_id) {
      raise(ErrorCode::integrity, "duplicate case_id " + rec.case_id);
    }
  }
  cases_.push_back(std::move(rec));
}

void CorpusStore::add_narrative(NarrativeRecord rec, std::optional<Provenance> prov) {
  derm::validate(rec);
  std::lock_guard lk(mu_);
  for (const auto& n : narratives_) {
    if (n.narrative_id == rec.narrative_id) {
      raise(ErrorCode::integrity, "duplicate narrative_id " + rec.narrative_id);
    }
  }
  if (prov) narrative_prov_[rec.narrative_id] = std::move(*prov);
  narratives_.push_back(std::move(rec));
}

void CorpusStore::add_evaluation(EvaluationRecord rec, std::optional<Provenance> prov) {
  derm::validate(rec);
  std::lock_guard lk(mu_);
  if (prov) evaluation_prov_[evaluations_.size()] = std::move(*prov);
  if (rec.rater == Rater::physician) {
    auto it = cert_state_.find(rec.narrative_id);
    if (it == cert_state_.end() || it->second == CertificationState::draft) {
      cert_state_[rec.narrative_id] = CertificationState::scored;
    }
  }
  evaluations_.push_back(std::move(rec));
}

const CaseRecord* CorpusStore::find_case(const std::string& case_id) const {
  for (const auto& c : cases_) {
    if (c.case_id == case_id) return &c;
  }
  return nullptr;
}

const NarrativeRecord* CorpusStore::find_narrative(const std::string& narrative_id) const {
  for (const auto& n : narratives_) {
    if (n.narrative_id == narrative_id) return &n;
  }
  return nullptr;
}

NarrativeRecord* CorpusStore::find_narrative(const std::string& narrative_id) {
  for (auto& n : narratives_) {
    if (n.narrative_id == narrative_id) return &n;
  }
  return nullptr;
}

const Provenance* CorpusStore::narrative_provenance(const std::string& narrative_id) const {
  auto it = narrative_prov_.find(narrative_id);
  return it == narrative_prov_.end() ? nullptr : &it->second;
}

const NarrativeRecord* CorpusStore::certified_reference(const std::string& case_id) const {
  for (const auto& n : narratives_) {
    if (n.case_id == case_id && n.role == NarrativeRole::reference) return &n;
  }
  return nullptr;
}

CertificationState CorpusStore::certification_state(const std::string& narrative_id) const {
  std::lock_guard lk(mu_);
  auto it = cert_state_.find(narrative_id);
  return it == cert_state_.end() ? CertificationState::draft : it->second;
}

void CorpusStore::record_revision(const std::string& narrative_id,
                                  const std::string& new_text) {
  if (new_text.empty()) raise(ErrorCode::invalid_argument, "revision with empty text");
  std::lock_guard lk(mu_);
  NarrativeRecord* rec = nullptr;
  for (auto& n : narratives_) {
    if (n.narrative_id == narrative_id) rec = &n;
  }
  if (!rec) raise(ErrorCode::not_found, "unknown narrative " + narrative_id);
  if (cert_state_[narrative_id] == CertificationState::certified) {
    raise(ErrorCode::integrity, "narrative " + narrative_id + " is already certified");
  }
  history_[narrative_id].push_back(rec->text);
  rec->text = new_text;
  cert_state_[narrative_id] = CertificationState::revised;
}

void CorpusStore::mark_certified(const std::string& narrative_id) {
  std::lock_guard lk(mu_);
  NarrativeRecord* rec = nullptr;
  for (auto& n : narratives_) {
    if (n.narrative_id == narrative_id) rec = &n;
  }
  if (!rec) raise(ErrorCode::not_found, "unknown narrative " + narrative_id);
  if (const auto* existing = certified_reference(rec->case_id);
      existing && existing->narrative_id != narrative_id) {
    raise(ErrorCode::integrity,
          "case " + rec->case_id + " already has certified reference " +
              existing->narrative_id);
  }
  rec->role = NarrativeRole::reference;
  derm::validate(*rec);  // reference role requires the high-quality stream
  cert_state_[narrative_id] = CertificationState::certified;
}

const std::vector<std::string>& CorpusStore::revision_history(
    const std::string& narrative_id) const {
  static const std::vector<std::string> kEmpty;
  auto it = history_.find(narrative_id);
  return it == history_.end() ? kEmpty : it->second;
}

void CorpusStore::validate() const {
  std::set<std::string> case_ids;
  for (const auto& c : cases_) {
    derm::validate(c);
    if (!case_ids.insert(c.case_id).second) {
      raise(ErrorCode::integrity, "duplicate case_id " + c.case_id);
    }
  }
  std::set<std::string> narrative_ids;
  std::set<std::string> certified_cases;
  for (const auto& n : narratives_) {
    derm::validate(n);
    if (!narrative_ids.insert(n.narrative_id).second) {
      raise(ErrorCode::integrity, "duplicate narrative_id " + n.narrative_id);
    }
    if (!case_ids.contains(n.case_id)) {
      raise(ErrorCode::integrity,
            "narrative " + n.narrative_id + " references unknown case " + n.case_id);
    }
    if (n.role == NarrativeRole::reference && !certified_cases.insert(n.case_id).second) {
      raise(ErrorCode::integrity, "case " + n.case_id + " has two certified references");
    }
  }
  for (const auto& e : evaluations_) {
    derm::validate(e);
    if (!narrative_ids.contains(e.narrative_id)) {
      raise(ErrorCode::integrity,
            "evaluation references unknown narrative " + e.narrative_id);
    }
  }
}

namespace {

ordered_json narrative_to_json(const NarrativeRecord& rec, const Provenance* prov,
                               const std::vector<std::string>& revisions) {
  ordered_json out;
  out["narrative_id"] = rec.narrative_id;
  out["case_id"] = rec.case_id;
  out["source_model"] = rec.source_model;
  out["role"] = std::string(to_string(rec.role));
  out["stream"] = std::string(to_string(rec.stream));
  out["text"] = rec.text;
  if (prov) out["provenance"] = provenance_to_json(*prov);
  if (!revisions.empty()) out["revisions"] = revisions;
  return out;
}

ordered_json evaluation_to_json(const EvaluationRecord& rec, const Provenance* prov) {
  ordered_json out;
  out["narrative_id"] = rec.narrative_id;
  out["rater"] = std::string(to_string(rec.rater));
  out["scores"] = scores_to_json(rec.scores);
  out["rationale"] = rec.rationale;
  if (prov) out["provenance"] = provenance_to_json(*prov);
  return out;
}

}  // namespace

std::string CorpusStore::content_hash() const {
  ordered_json doc;
  doc["cases"] = ordered_json::array();
  for (const auto& c : cases_) doc["cases"].push_back(case_to_json(c));
  doc["narratives"] = ordered_json::array();
  for (const auto& n : narratives_) {
    doc["narratives"].push_back(
        narrative_to_json(n, narrative_provenance(n.narrative_id), revision_history(n.narrative_id)));
  }
  doc["evaluations"] = ordered_json::array();
  for (std::size_t i = 0; i < evaluations_.size(); ++i) {
    auto it = evaluation_prov_.find(i);
    doc["evaluations"].push_back(evaluation_to_json(
        evaluations_[i], it == evaluation_prov_.end() ? nullptr : &it->second));
  }
  return backends::sha256_hex(doc.dump());
}

void CorpusStore::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorCode::io, "cannot create " + dir.string());

  const auto write_lines = [&](const std::filesystem::path& file, const auto& emit) {
    std::ofstream out(file, std::ios::binary);
    if (!out) raise(ErrorCode::io, "cannot write " + file.string());
    emit(out);
  };
  write_lines(dir / "cases.jsonl", [&](std::ofstream& out) {
    for (const auto& c : cases_) out << case_to_json(c).dump() << "\n";
  });
  write_lines(dir / "narratives.jsonl", [&](std::ofstream& out) {
    for (const auto& n : narratives_) {
      out << narrative_to_json(n, narrative_provenance(n.narrative_id),
                               revision_history(n.narrative_id))
                 .dump()
          << "\n";
    }
  });
  write_lines(dir / "evaluations.jsonl", [&](std::ofstream& out) {
    for (std::size_t i = 0; i < evaluations_.size(); ++i) {
      auto it = evaluation_prov_.find(i);
      out << evaluation_to_json(evaluations_[i],
                                it == evaluation_prov_.end() ? nullptr : &it->second)
                 .dump()
          << "\n";
    }
  });
}

CorpusStore CorpusStore::load(const std::filesystem::path& dir) {
  CorpusStore store;
  for (const auto& rec : load_cases(dir / "cases.jsonl")) store.add_case(rec);

  const auto narratives_file = dir / "narratives.jsonl";
  if (std::filesystem::exists(narratives_file)) {
    const auto lines = jsonl_lines(narratives_file);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const json j = parse_line(lines[i], narratives_file, i);
      NarrativeRecord rec;
      rec.narrative_id = j.value("narrative_id", "");
      rec.case_id = j.value("case_id", "");
      rec.source_model = j.value("source_model", "");
      const auto role = parse_role(j.value("role", "candidate"));
      const auto stream = parse_stream(j.value("stream", "external"));
      if (!role || !stream) {
        raise(ErrorCode::schema, "bad role/stream for narrative " + rec.narrative_id);
      }
      rec.role = *role;
      rec.stream = *stream;
      rec.text = j.value("text", "");
      std::optional<Provenance> prov;
      if (j.contains("provenance")) prov = provenance_from_json(j["provenance"]);
      store.add_narrative(rec, prov);
      if (j.contains("revisions")) {
        store.history_[rec.narrative_id] =
            j["revisions"].get<std::vector<std::string>>();
        store.cert_state_[rec.narrative_id] = CertificationState::revised;
      }
      if (rec.role == NarrativeRole::reference) {
        store.cert_state_[rec.narrative_id] = CertificationState::certified;
      }
    }
  }

  const auto evaluations_file = dir / "evaluations.jsonl";
  if (std::filesystem::exists(evaluations_file)) {
    const auto lines = jsonl_lines(evaluations_file);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const json j = parse_line(lines[i], evaluations_file, i);
      std::optional<Provenance> prov;
      if (j.contains("provenance")) prov = provenance_from_json(j["provenance"]);
      store.add_evaluation(evaluation_from_json(j), prov);
    }
  }
  store.validate();
  return store;
}

std::vector<CaseRecord> load_cases(const std::filesystem::path& file) {
  std::vector<CaseRecord> cases;
  const auto lines = jsonl_lines(file);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    cases.push_back(case_from_json(parse_line(lines[i], file, i)));
  }
  return cases;
}

void save_cases(std::span<const CaseRecord> cases, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + file.string());
  for (const auto& c : cases) out << case_to_json(c).dump() << "\n";
}

std::vector<EvaluationRecord> import_expert_scores(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) raise(ErrorCode::io, "cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::schema, csv.string() + ": empty file");

  const auto split_fields = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(s);
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    return fields;
  };

  const auto header = split_fields(line);
  if (header.empty() || header[0] != "narrative_id") {
    raise(ErrorCode::schema, csv.string() + ": first column must be narrative_id");
  }
  std::vector<Dimension> columns;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto dim = parse_dimension(header[i]);
    if (!dim) raise(ErrorCode::schema, csv.string() + ": unknown column '" + header[i] + "'");
    columns.push_back(*dim);
  }
  if (columns.size() != kDimensionCount) {
    raise(ErrorCode::schema, csv.string() + ": expected six score columns");
  }

  std::vector<EvaluationRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != columns.size() + 1) {
      raise(ErrorCode::schema,
            csv.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    EvaluationRecord rec;
    rec.narrative_id = fields[0];
    rec.rater = Rater::physician;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      int value = 0;
      try {
        std::size_t used = 0;
        value = std::stoi(fields[i + 1], &used);
        if (used != fields[i + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        raise(ErrorCode::schema, csv.string() + ":" + std::to_string(line_no) +
                                     ": non-integer score '" + fields[i + 1] + "'");
      }
      rec.scores.set(columns[i], Score::from_int(value));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<EvaluationRecord> load_evaluations(const std::filesystem::path& file) {
  std::vector<EvaluationRecord> records;
  const auto lines = jsonl_lines(file);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto rec = evaluation_from_json(parse_line(lines[i], file, i));
    validate(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

void save_evaluations(std::span<const EvaluationRecord> evaluations,
                      const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + file.string());
  for (const auto& rec : evaluations) {
    out << evaluation_to_json(rec, nullptr).dump() << "\n";
  }
}

std::vector<CaseRecord> sample_cases(std::span<const CaseRecord> pool, std::size_t count,
                                     SampleMode mode, std::uint64_t seed) {
  if (count > pool.size()) {
    raise(ErrorCode::invalid_argument, "sample larger than the case pool");
  }
  std::vector<CaseRecord> ordered(pool.begin(), pool.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const CaseRecord& a, const CaseRecord& b) { return a.case_id < b.case_id; });

  std::mt19937_64 rng(seed);
  const auto shuffle = [&rng](std::vector<CaseRecord>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[rng() % i]);
    }
  };

  if (mode == SampleMode::uniform) {
    shuffle(ordered);
    ordered.resize(count);
    return ordered;
  }

  std::map<std::string, std::vector<CaseRecord>> by_category;
  for (auto& c : ordered) by_category[c.category].push_back(c);
  for (auto& [_, group] : by_category) shuffle(group);

  std::vector<CaseRecord> out;
  std::size_t cursor = 0;
  while (out.size() < count) {
    bool progressed = false;
    for (auto& [_, group] : by_category) {
      if (cursor < group.size() && out.size() < count) {
        out.push_back(group[cursor]);
        progressed = true;
      }
    }
    if (!progressed) break;
    ++cursor;
  }
  return out;
}

}  // namespace derm::bench

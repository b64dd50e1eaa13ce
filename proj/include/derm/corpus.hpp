#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "derm/records.hpp"

namespace derm::bench {

// Backend and prompt identity of a generated record. Wall-clock timestamps
// live in run manifests, not here, so corpus files stay byte-identical across
// reruns.
struct Provenance {
  std::string model_id;
  std::string prompt_id;
  std::string fingerprint;
};

enum class CertificationState { draft, scored, revised, certified };
std::string_view to_string(CertificationState s);

// In-memory corpus with referential-integrity checks and stable JSONL
// serialization. Appends from concurrent pipeline workers are serialized
// internally.
class CorpusStore {
 public:
  CorpusStore() = default;
  CorpusStore(CorpusStore&& other) noexcept;
  CorpusStore& operator=(CorpusStore&& other) noexcept;

  void add_case(CaseRecord rec);
  void add_narrative(NarrativeRecord rec, std::optional<Provenance> prov = std::nullopt);
  void add_evaluation(EvaluationRecord rec, std::optional<Provenance> prov = std::nullopt);

  const std::vector<CaseRecord>& cases() const { return cases_; }
  const std::vector<NarrativeRecord>& narratives() const { return narratives_; }
  const std::vector<EvaluationRecord>& evaluations() const { return evaluations_; }

  const CaseRecord* find_case(const std::string& case_id) const;
  const NarrativeRecord* find_narrative(const std::string& narrative_id) const;
  NarrativeRecord* find_narrative(const std::string& narrative_id);
  const Provenance* narrative_provenance(const std::string& narrative_id) const;

  // The certified reference for a case, if any (role == reference).
  const NarrativeRecord* certified_reference(const std::string& case_id) const;

  // Certification bookkeeping: state machine draft -> scored -> revised ->
  // certified, with prior texts retained.
  CertificationState certification_state(const std::string& narrative_id) const;
  void record_revision(const std::string& narrative_id, const std::string& new_text);
  void mark_certified(const std::string& narrative_id);
  const std::vector<std::string>& revision_history(const std::string& narrative_id) const;

  // Referential integrity plus at-most-one certified reference per case;
  // raises on violation.
  void validate() const;

  // SHA-256 over the canonical serialization of all records.
  std::string content_hash() const;

  void save(const std::filesystem::path& dir) const;
  static CorpusStore load(const std::filesystem::path& dir);

 private:
  std::vector<CaseRecord> cases_;
  std::vector<NarrativeRecord> narratives_;
  std::vector<EvaluationRecord> evaluations_;
  std::map<std::string, Provenance> narrative_prov_;
  std::map<std::size_t, Provenance> evaluation_prov_;
  std::map<std::string, std::vector<std::string>> history_;
  std::map<std::string, CertificationState> cert_state_;
  mutable std::mutex mu_;
};

std::vector<CaseRecord> load_cases(const std::filesystem::path& file);
void save_cases(std::span<const CaseRecord> cases, const std::filesystem::path& file);

// Standalone evaluations.jsonl reader/writer (same line schema the store uses).
std::vector<EvaluationRecord> load_evaluations(const std::filesystem::path& file);
void save_evaluations(std::span<const EvaluationRecord> evaluations,
                      const std::filesystem::path& file);

// expert_scores.csv: header "narrative_id" plus six integer score columns
// (dimension names or aliases). Produces physician evaluation records.
std::vector<EvaluationRecord> import_expert_scores(const std::filesystem::path& csv);

enum class SampleMode { uniform, stratified };

// Deterministic case subsetting for benchmark construction: uniform over the
// pool or stratified per disease category (near-equal shares, remainder by
// category order).
std::vector<CaseRecord> sample_cases(std::span<const CaseRecord> pool, std::size_t count,
                                     SampleMode mode, std::uint64_t seed);

}  // namespace derm::bench

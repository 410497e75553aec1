#include "rtriage/core_model.hpp"

#include <cctype>
#include <cstdio>
#include <unordered_set>

#include "rtriage/error.hpp"

namespace rtriage {

std::string_view to_string(EventStatus s) {
  switch (s) {
    case EventStatus::failed: return "failed";
    case EventStatus::skipped: return "skipped";
    case EventStatus::succeeded: return "succeeded";
  }
  return "succeeded";
}

EventStatus parse_status(std::string_view s) {
  if (s == "failed") return EventStatus::failed;
  if (s == "skipped") return EventStatus::skipped;
  if (s == "succeeded") return EventStatus::succeeded;
  throw ValidationError("unknown status '" + std::string(s) + "'");
}

std::string_view to_string(LabelSource s) {
  return s == LabelSource::predicted_certain ? "predicted_certain" : "operator_reclassified";
}

LabelSource parse_label_source(std::string_view s) {
  if (s == "predicted_certain") return LabelSource::predicted_certain;
  if (s == "operator_reclassified") return LabelSource::operator_reclassified;
  throw ValidationError("unknown label_source '" + std::string(s) + "'");
}

std::string normalize_statement(std::string_view statement) {
  std::string out;
  out.reserve(statement.size());
  bool pending_space = false;
  for (unsigned char c : statement) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_statement(std::string_view statement) { return fnv1a64(normalize_statement(statement)); }

std::string hash_to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) throw ValidationError("bad hash '" + std::string(hex) + "'");
  std::uint64_t h = 0;
  for (char c : hex) {
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw ValidationError("bad hash '" + std::string(hex) + "'");
    h = (h << 4) | static_cast<std::uint64_t>(v);
  }
  return h;
}

ValidationResult validate_event(const ReplayEvent& e) {
  ValidationResult r;
  auto need = [&](bool cond, const char* msg) {
    if (!cond) r.violations.emplace_back(msg);
  };
  need(!e.event_id.empty(), "missing event_id");
  need(!e.replay_id.empty(), "missing replay_id");
  need(!e.session_id.empty(), "missing session_id");
  need(e.statement_hash == hash_statement(e.statement_string),
       "statement_hash does not match statement_string");
  switch (e.status) {
    case EventStatus::failed:
      need(e.error_code.has_value(), "missing error_code");
      need(e.error_message.has_value(), "missing error_message");
      break;
    case EventStatus::skipped:
      need(e.skip_reason.has_value(), "missing skip_reason");
      break;
    case EventStatus::succeeded:
      need(!e.error_code.has_value(), "error_code present on succeeded event");
      need(!e.error_message.has_value(), "error_message present on succeeded event");
      break;
  }
  return r;
}

ReplayEvent make_event(std::string event_id, std::string replay_id, std::string session_id,
                       std::uint64_t seq_no, std::string statement, EventStatus status) {
  ReplayEvent e;
  e.event_id = std::move(event_id);
  e.replay_id = std::move(replay_id);
  e.session_id = std::move(session_id);
  e.seq_no = seq_no;
  e.statement_hash = hash_statement(statement);
  e.statement_string = std::move(statement);
  e.status = status;
  return e;
}

std::string categorical_value(const ReplayEvent& e, CategoricalAttribute a) {
  switch (a) {
    case CategoricalAttribute::error_code:
      return e.error_code ? std::to_string(*e.error_code) : std::string();
    case CategoricalAttribute::request_name: return e.request_name;
    case CategoricalAttribute::sql_type: return e.sql_type;
    case CategoricalAttribute::sql_sub_type: return e.sql_sub_type;
  }
  return {};
}

CategoricalSchema CategoricalSchema::fit(const std::vector<const ReplayEvent*>& events,
                                         bool oov_slot) {
  CategoricalSchema s;
  s.oov_slot = oov_slot;
  for (std::size_t a = 0; a < kCategoricalAttributeCount; ++a) {
    std::unordered_set<std::string> seen;
    for (const ReplayEvent* e : events) {
      std::string v = categorical_value(*e, static_cast<CategoricalAttribute>(a));
      if (seen.insert(v).second) s.vocabularies[a].push_back(std::move(v));
    }
  }
  return s;
}

std::size_t CategoricalSchema::width() const {
  std::size_t w = 0;
  for (const auto& v : vocabularies) w += v.size() + (oov_slot ? 1 : 0);
  return w;
}

std::size_t CategoricalSchema::attribute_offset(CategoricalAttribute a) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a); ++i)
    off += vocabularies[i].size() + (oov_slot ? 1 : 0);
  return off;
}

std::size_t CategoricalSchema::slot(CategoricalAttribute a, std::string_view value) const {
  const auto& vocab = vocabularies[static_cast<std::size_t>(a)];
  const std::size_t off = attribute_offset(a);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == value) return off + i;
  if (!oov_slot)
    throw ValidationError("unknown categorical value '" + std::string(value) + "'");
  return off + vocab.size();
}

void validate(const Hyperparameters& hp) {
  std::vector<std::string> v;
  if (hp.k_neighbors < 1) v.emplace_back("k_neighbors must be positive");
  if (hp.w_categorical < 0 || hp.w_textual < 0) v.emplace_back("weights must be non-negative");
  if (hp.w_categorical + hp.w_textual <= 0) v.emplace_back("weights must not both be zero");
  if (hp.certainty_threshold < 0 || hp.certainty_threshold > 1)
    v.emplace_back("certainty_threshold outside [0,1]");
  if (!(hp.problem_group_threshold > 0 && hp.problem_group_threshold <= 1))
    v.emplace_back("problem_group_threshold outside (0,1]");
  if (hp.error_word_limit < 1) v.emplace_back("error_word_limit must be positive");
  if (hp.token_budget < 1) v.emplace_back("token_budget must be positive");
  if (hp.per_class_replay_cap < 1) v.emplace_back("per_class_replay_cap must be positive");
  if (hp.cv_folds < 1) v.emplace_back("cv_folds must be positive");
  if (hp.embed_dim < 8) v.emplace_back("embed_dim must be at least 8");
  if (hp.ngram_min < 1 || hp.ngram_max < hp.ngram_min) v.emplace_back("bad n-gram range");
  if (hp.chi2_top_terms < 1 || hp.tfidf_top_terms < 1) v.emplace_back("top-term counts must be positive");
  if (v.empty()) return;
  std::string msg = "invalid hyperparameters:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ValidationError(msg);
}

void to_json(nlohmann::json& j, const ReplayEvent& e) {
  j = nlohmann::json{{"event_id", e.event_id},
                     {"replay_id", e.replay_id},
                     {"capture_id", e.capture_id},
                     {"session_id", e.session_id},
                     {"seq_no", e.seq_no},
                     {"statement_hash", hash_to_hex(e.statement_hash)},
                     {"statement_string", e.statement_string},
                     {"sql_type", e.sql_type},
                     {"sql_sub_type", e.sql_sub_type},
                     {"request_name", e.request_name}};
  if (e.error_code) j["error_code"] = *e.error_code;
  if (e.error_message) j["error_message"] = *e.error_message;
  if (e.skip_reason) j["skip_reason"] = *e.skip_reason;
  j["status"] = std::string(to_string(e.status));
}

void from_json(const nlohmann::json& j, ReplayEvent& e) {
  e = ReplayEvent{};
  j.at("event_id").get_to(e.event_id);
  j.at("replay_id").get_to(e.replay_id);
  if (j.contains("capture_id")) j.at("capture_id").get_to(e.capture_id);
  j.at("session_id").get_to(e.session_id);
  j.at("seq_no").get_to(e.seq_no);
  j.at("statement_string").get_to(e.statement_string);
  if (j.contains("statement_hash"))
    e.statement_hash = hash_from_hex(j.at("statement_hash").get<std::string>());
  else
    e.statement_hash = hash_statement(e.statement_string);
  if (j.contains("sql_type")) j.at("sql_type").get_to(e.sql_type);
  if (j.contains("sql_sub_type")) j.at("sql_sub_type").get_to(e.sql_sub_type);
  if (j.contains("request_name")) j.at("request_name").get_to(e.request_name);
  if (j.contains("error_code")) e.error_code = j.at("error_code").get<std::int64_t>();
  if (j.contains("error_message")) e.error_message = j.at("error_message").get<std::string>();
  if (j.contains("skip_reason")) e.skip_reason = j.at("skip_reason").get<std::string>();
  e.status = parse_status(j.at("status").get<std::string>());
}

void to_json(nlohmann::json& j, const CategoricalSchema& s) {
  j = nlohmann::json{{"error_code", s.vocabularies[0]},
                     {"request_name", s.vocabularies[1]},
                     {"sql_type", s.vocabularies[2]},
                     {"sql_sub_type", s.vocabularies[3]},
                     {"oov_slot", s.oov_slot}};
}

void from_json(const nlohmann::json& j, CategoricalSchema& s) {
  s.vocabularies[0] = j.at("error_code").get<std::vector<std::string>>();
  s.vocabularies[1] = j.at("request_name").get<std::vector<std::string>>();
  s.vocabularies[2] = j.at("sql_type").get<std::vector<std::string>>();
  s.vocabularies[3] = j.at("sql_sub_type").get<std::vector<std::string>>();
  s.oov_slot = j.value("oov_slot", true);
}

void to_json(nlohmann::json& j, const Hyperparameters& hp) {
  j = nlohmann::json{{"k_neighbors", hp.k_neighbors},
                     {"w_categorical", hp.w_categorical},
                     {"w_textual", hp.w_textual},
                     {"certainty_threshold", hp.certainty_threshold},
                     {"problem_group_threshold", hp.problem_group_threshold},
                     {"error_word_limit", hp.error_word_limit},
                     {"token_budget", hp.token_budget},
                     {"per_class_replay_cap", hp.per_class_replay_cap},
                     {"cv_folds", hp.cv_folds},
                     {"embed_dim", hp.embed_dim},
                     {"ngram_min", hp.ngram_min},
                     {"ngram_max", hp.ngram_max},
                     {"hash_seed", hp.hash_seed},
                     {"chi2_top_terms", hp.chi2_top_terms},
                     {"tfidf_top_terms", hp.tfidf_top_terms}};
}

// Missing keys keep their defaults so partial config files work.
void from_json(const nlohmann::json& j, Hyperparameters& hp) {
  const Hyperparameters d;
  hp.k_neighbors = j.value("k_neighbors", d.k_neighbors);
  hp.w_categorical = j.value("w_categorical", d.w_categorical);
  hp.w_textual = j.value("w_textual", d.w_textual);
  hp.certainty_threshold = j.value("certainty_threshold", d.certainty_threshold);
  hp.problem_group_threshold = j.value("problem_group_threshold", d.problem_group_threshold);
  hp.error_word_limit = j.value("error_word_limit", d.error_word_limit);
  hp.token_budget = j.value("token_budget", d.token_budget);
  hp.per_class_replay_cap = j.value("per_class_replay_cap", d.per_class_replay_cap);
  hp.cv_folds = j.value("cv_folds", d.cv_folds);
  hp.embed_dim = j.value("embed_dim", d.embed_dim);
  hp.ngram_min = j.value("ngram_min", d.ngram_min);
  hp.ngram_max = j.value("ngram_max", d.ngram_max);
  hp.hash_seed = j.value("hash_seed", d.hash_seed);
  hp.chi2_top_terms = j.value("chi2_top_terms", d.chi2_top_terms);
  hp.tfidf_top_terms = j.value("tfidf_top_terms", d.tfidf_top_terms);
}

void to_json(nlohmann::json& j, const LabeledEvent& e) {
  j = nlohmann::json{{"event", e.event},
                     {"label_id", e.label.label_id},
                     {"display_name", e.label.display_name},
                     {"label_source", std::string(to_string(e.label_source))},
                     {"certainty_at_labeling", e.certainty_at_labeling}};
  if (e.summary_text) j["summary_text"] = *e.summary_text;
}

void from_json(const nlohmann::json& j, LabeledEvent& e) {
  e = LabeledEvent{};
  j.at("event").get_to(e.event);
  j.at("label_id").get_to(e.label.label_id);
  e.label.display_name = j.value("display_name", e.label.label_id);
  e.label_source = parse_label_source(j.value("label_source", std::string("operator_reclassified")));
  e.certainty_at_labeling = j.value("certainty_at_labeling", 1.0);
  if (j.contains("summary_text")) e.summary_text = j.at("summary_text").get<std::string>();
}

}  // namespace rtriage

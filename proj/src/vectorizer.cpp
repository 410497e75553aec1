#include <algorithm>
#include <cctype>
#include <cmath>

#include "rtriage/error.hpp"
#include "rtriage/featurize.hpp"
#include "rtriage/random.hpp"

namespace rtriage {

std::string_view to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::em: return "em";
    case FeatureMode::em_ss: return "em_ss";
    case FeatureMode::em_ss_summary: return "em_ss_summary";
    case FeatureMode::em_summary: return "em_summary";
  }
  return "em_ss";
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "em") return FeatureMode::em;
  if (s == "em_ss") return FeatureMode::em_ss;
  if (s == "em_ss_summary") return FeatureMode::em_ss_summary;
  if (s == "em_summary") return FeatureMode::em_summary;
  throw ValidationError("unknown feature mode '" + std::string(s) + "'");
}

bool uses_summary(FeatureMode m) {
  return m == FeatureMode::em_ss_summary || m == FeatureMode::em_summary;
}

std::string_view to_string(VectorizerKind k) {
  return k == VectorizerKind::tfidf ? "tfidf" : "subword_embedding";
}

VectorizerKind parse_vectorizer_kind(std::string_view s) {
  if (s == "tfidf") return VectorizerKind::tfidf;
  if (s == "subword_embedding" || s == "subword") return VectorizerKind::subword_embedding;
  throw ValidationError("unknown vectorizer '" + std::string(s) + "'");
}

std::string compose_text(const ReplayEvent& event, const std::optional<std::string>& summary,
                         FeatureMode mode) {
  std::string out;
  auto add = [&out](std::string_view part) {
    if (part.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out.append(part);
  };
  if (event.error_message) add(*event.error_message);
  if (mode == FeatureMode::em_ss || mode == FeatureMode::em_ss_summary) add(event.statement_string);
  if (uses_summary(mode) && summary) add(*summary);
  return out;
}

Tokens preprocess(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && !std::all_of(cur.begin(), cur.end(), [](unsigned char c) { return std::isdigit(c); }))
      out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c))
      cur.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void l2_normalize(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (n == 0) return;
  for (double& x : v) x /= n;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

std::size_t TextVectorizerState::dimension() const {
  return kind == VectorizerKind::tfidf ? terms.size() : static_cast<std::size_t>(embed_dim);
}

std::optional<std::size_t> TextVectorizerState::term_index(std::string_view term) const {
  auto it = index.find(std::string(term));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

TextVectorizerState fit_tfidf(const std::vector<Tokens>& corpus, std::size_t max_terms) {
  if (corpus.empty()) throw PreconditionError("fit_tfidf: empty corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    Tokens uniq = doc;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (auto& t : uniq) ++df[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries(df.begin(), df.end());
  if (max_terms > 0 && entries.size() > max_terms) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    entries.resize(max_terms);
  }
  std::sort(entries.begin(), entries.end());
  TextVectorizerState s;
  s.kind = VectorizerKind::tfidf;
  const double n = static_cast<double>(corpus.size());
  for (const auto& [term, count] : entries) {
    s.index.emplace(term, s.terms.size());
    s.terms.push_back(term);
    s.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return s;
}

std::vector<double> transform_tfidf(const TextVectorizerState& s, const Tokens& tokens) {
  std::vector<double> v(s.terms.size(), 0.0);
  for (const auto& t : tokens)
    if (auto it = s.index.find(t); it != s.index.end()) v[it->second] += 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s.idf[i];
  l2_normalize(v);
  return v;
}

TextVectorizerState fit_subword(const std::vector<Tokens>&, int embed_dim, int ngram_min,
                                int ngram_max, std::uint64_t hash_seed) {
  if (embed_dim < 8) throw PreconditionError("fit_subword: embed_dim must be at least 8");
  if (ngram_min < 1 || ngram_max < ngram_min) throw PreconditionError("fit_subword: bad n-gram range");
  TextVectorizerState s;
  s.kind = VectorizerKind::subword_embedding;
  s.embed_dim = embed_dim;
  s.ngram_min = ngram_min;
  s.ngram_max = ngram_max;
  s.hash_seed = hash_seed;
  return s;
}

std::vector<std::string> subword_units(std::string_view token, int ngram_min, int ngram_max) {
  const std::string marked = "<" + std::string(token) + ">";
  std::vector<std::string> units;
  for (int n = ngram_min; n <= ngram_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (len > marked.size()) break;
    for (std::size_t i = 0; i + len <= marked.size(); ++i) units.push_back(marked.substr(i, len));
  }
  // Whole-word unit, kept distinct from an n-gram of identical spelling.
  units.push_back("w:" + marked);
  return units;
}

std::vector<double> unit_vector(std::string_view unit, int embed_dim, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : unit) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::vector<double> v(static_cast<std::size_t>(embed_dim));
  std::uint64_t state = h;
  for (double& x : v) {
    state = mix64(state);
    x = static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;  // [-1, 1)
  }
  l2_normalize(v);
  return v;
}

namespace {

// Sum of the unit vectors of a token plus how many units contributed.
struct TokenAccum {
  std::vector<double> sum;
  std::size_t units = 0;
};

TokenAccum accumulate_token(const TextVectorizerState& s, std::string_view token) {
  TokenAccum a;
  a.sum.assign(static_cast<std::size_t>(s.embed_dim), 0.0);
  for (const auto& u : subword_units(token, s.ngram_min, s.ngram_max)) {
    const auto uv = unit_vector(u, s.embed_dim, s.hash_seed);
    for (std::size_t i = 0; i < uv.size(); ++i) a.sum[i] += uv[i];
    ++a.units;
  }
  return a;
}

std::vector<double> finish_mean(std::vector<double> sum, std::size_t units) {
  if (units == 0) return sum;
  for (double& x : sum) x /= static_cast<double>(units);
  l2_normalize(sum);
  return sum;
}

}  // namespace

std::vector<double> transform_subword(const TextVectorizerState& s, const Tokens& tokens) {
  std::vector<double> sum(static_cast<std::size_t>(s.embed_dim), 0.0);
  std::size_t units = 0;
  for (const auto& t : tokens) {
    const TokenAccum a = accumulate_token(s, t);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += a.sum[i];
    units += a.units;
  }
  return finish_mean(std::move(sum), units);
}

std::vector<double> transform(const TextVectorizerState& s, const Tokens& tokens) {
  return s.kind == VectorizerKind::tfidf ? transform_tfidf(s, tokens) : transform_subword(s, tokens);
}

std::vector<std::vector<double>> transform_batch(const TextVectorizerState& s,
                                                 const std::vector<Tokens>& docs) {
  std::vector<std::vector<double>> out;
  out.reserve(docs.size());
  if (s.kind == VectorizerKind::tfidf) {
    for (const auto& d : docs) out.push_back(transform_tfidf(s, d));
    return out;
  }
  std::unordered_map<std::string, TokenAccum> cache;
  for (const auto& d : docs) {
    std::vector<double> sum(static_cast<std::size_t>(s.embed_dim), 0.0);
    std::size_t units = 0;
    for (const auto& t : d) {
      auto it = cache.find(t);
      if (it == cache.end()) it = cache.emplace(t, accumulate_token(s, t)).first;
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += it->second.sum[i];
      units += it->second.units;
    }
    out.push_back(finish_mean(std::move(sum), units));
  }
  return out;
}

void to_json(nlohmann::json& j, const TextVectorizerState& s) {
  j = nlohmann::json{{"kind", std::string(to_string(s.kind))}};
  if (s.kind == VectorizerKind::tfidf) {
    j["vocabulary"] = s.terms;
    j["idf"] = s.idf;
  } else {
    j["embed_dim"] = s.embed_dim;
    j["ngram_min"] = s.ngram_min;
    j["ngram_max"] = s.ngram_max;
    j["hash_seed"] = s.hash_seed;
  }
}

void from_json(const nlohmann::json& j, TextVectorizerState& s) {
  s = TextVectorizerState{};
  s.kind = parse_vectorizer_kind(j.at("kind").get<std::string>());
  if (s.kind == VectorizerKind::tfidf) {
    s.terms = j.at("vocabulary").get<std::vector<std::string>>();
    s.idf = j.at("idf").get<std::vector<double>>();
    if (s.terms.size() != s.idf.size()) throw ParseError(0, "vocabulary and idf sizes differ");
    for (std::size_t i = 0; i < s.terms.size(); ++i) s.index.emplace(s.terms[i], i);
  } else {
    s.embed_dim = j.at("embed_dim").get<int>();
    s.ngram_min = j.at("ngram_min").get<int>();
    s.ngram_max = j.at("ngram_max").get<int>();
    s.hash_seed = j.at("hash_seed").get<std::uint64_t>();
  }
}

Tokens tfidf_term_filter(const Tokens& tokens, const TextVectorizerState& state, std::size_t top_n) {
  // Distinct tokens in first-occurrence order with their in-document weight.
  std::vector<std::pair<std::string, double>> weights;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& t : tokens) {
    auto [it, fresh] = pos.emplace(t, weights.size());
    if (fresh) weights.emplace_back(t, 0.0);
    if (auto idx = state.term_index(t)) weights[it->second].second += state.idf[*idx];
  }
  if (top_n >= weights.size()) return tokens;
  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a].second > weights[b].second; });
  std::unordered_map<std::string, bool> keep;
  for (std::size_t r = 0; r < top_n; ++r) keep[weights[order[r]].first] = true;
  Tokens out;
  for (const auto& t : tokens)
    if (keep.count(t)) out.push_back(t);
  return out;
}

std::vector<std::uint8_t> FeatureVector::categorical_dense() const {
  std::vector<std::uint8_t> d(categorical_width, 0);
  for (auto slot : categorical) d[slot] = 1;
  return d;
}

FeatureVector encode(const ReplayEvent& event, std::vector<double> text_vector,
                     const CategoricalSchema& schema) {
  const double n = l2_norm(text_vector);
  if (n != 0 && std::abs(n - 1.0) > 1e-6)
    throw PreconditionError("encode: text vector norm " + std::to_string(n) + " is neither 0 nor 1");
  FeatureVector f;
  for (std::size_t a = 0; a < kCategoricalAttributeCount; ++a) {
    const auto attr = static_cast<CategoricalAttribute>(a);
    f.categorical[a] = static_cast<std::uint32_t>(schema.slot(attr, categorical_value(event, attr)));
  }
  f.categorical_width = static_cast<std::uint32_t>(schema.width());
  f.text = std::move(text_vector);
  return f;
}

void to_json(nlohmann::json& j, const FeatureVector& v) {
  j = nlohmann::json{{"categorical", v.categorical},
                     {"categorical_width", v.categorical_width},
                     {"text", v.text}};
}

void from_json(const nlohmann::json& j, FeatureVector& v) {
  v.categorical = j.at("categorical").get<std::array<std::uint32_t, kCategoricalAttributeCount>>();
  v.categorical_width = j.at("categorical_width").get<std::uint32_t>();
  v.text = j.at("text").get<std::vector<double>>();
}

}  // namespace rtriage

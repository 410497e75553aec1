#pragma once

// Event -> FeatureVector: one-hot categoricals plus one vectorized text block
// built from the concatenated textual attributes.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/core_model.hpp"

namespace rtriage {

using Tokens = std::vector<std::string>;

enum class FeatureMode { em, em_ss, em_ss_summary, em_summary };
std::string_view to_string(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view s);
bool uses_summary(FeatureMode m);

/// Space-joined error_message, statement_string and summary as selected by the
/// mode, in that order. Absent parts contribute nothing.
std::string compose_text(const ReplayEvent& event, const std::optional<std::string>& summary,
                         FeatureMode mode);

/// Lowercase, split on non-alphanumerics, drop numeric and 1-char tokens.
Tokens preprocess(std::string_view text);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
void l2_normalize(std::vector<double>& v);
/// Cosine similarity; 0 when either side is the zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

enum class VectorizerKind { tfidf, subword_embedding };
std::string_view to_string(VectorizerKind k);
VectorizerKind parse_vectorizer_kind(std::string_view s);

struct TextVectorizerState {
  VectorizerKind kind = VectorizerKind::tfidf;
  // tfidf
  std::vector<std::string> terms;  // index -> term, sorted
  std::vector<double> idf;
  std::unordered_map<std::string, std::size_t> index;
  // subword
  int ngram_min = 3;
  int ngram_max = 6;
  int embed_dim = 128;
  std::uint64_t hash_seed = 0;

  std::size_t dimension() const;
  std::optional<std::size_t> term_index(std::string_view term) const;

  bool operator==(const TextVectorizerState& o) const {
    return kind == o.kind && terms == o.terms && idf == o.idf && ngram_min == o.ngram_min &&
           ngram_max == o.ngram_max && embed_dim == o.embed_dim && hash_seed == o.hash_seed;
  }
};

/// Smoothed idf: ln((1+N)/(1+df)) + 1. max_terms > 0 keeps the terms with the
/// highest document frequency (ties by term). Throws PreconditionError on an
/// empty corpus.
TextVectorizerState fit_tfidf(const std::vector<Tokens>& corpus, std::size_t max_terms = 0);
/// Raw-count tf times idf, L2-normalized; the zero vector stays zero.
std::vector<double> transform_tfidf(const TextVectorizerState& state, const Tokens& tokens);

TextVectorizerState fit_subword(const std::vector<Tokens>& corpus, int embed_dim, int ngram_min,
                                int ngram_max, std::uint64_t hash_seed);
std::vector<double> transform_subword(const TextVectorizerState& state, const Tokens& tokens);

/// Boundary-marked character n-grams of one token plus the whole token.
std::vector<std::string> subword_units(std::string_view token, int ngram_min, int ngram_max);
/// Seeded pseudo-random unit vector of one n-gram unit.
std::vector<double> unit_vector(std::string_view unit, int embed_dim, std::uint64_t seed);

std::vector<double> transform(const TextVectorizerState& state, const Tokens& tokens);
/// Same results as calling transform per document; caches per-token work.
std::vector<std::vector<double>> transform_batch(const TextVectorizerState& state,
                                                 const std::vector<Tokens>& docs);

void to_json(nlohmann::json& j, const TextVectorizerState& s);
void from_json(const nlohmann::json& j, TextVectorizerState& s);

struct TermScore {
  std::string term;
  double score = 0;
  bool operator==(const TermScore&) const = default;
};

struct TermImportanceReport {
  std::vector<TermScore> ranked;  // non-increasing
  std::map<std::string, std::vector<TermScore>> per_class_top;
};

/// Pearson chi-squared of the term-presence x class contingency table. The
/// overall score sums the per-class column contributions; per-class lists rank
/// terms by their one-vs-rest 2x2 statistic. Throws PreconditionError on fewer
/// than two distinct labels.
TermImportanceReport chi2_importance(const std::vector<Tokens>& corpus,
                                     const std::vector<std::string>& labels,
                                     std::size_t per_class_top = 10);

/// Keeps every occurrence of the top_n distinct tokens by in-document tf-idf
/// weight, preserving the original order.
Tokens tfidf_term_filter(const Tokens& tokens, const TextVectorizerState& state, std::size_t top_n);

struct FeatureVector {
  std::array<std::uint32_t, kCategoricalAttributeCount> categorical{};  // active slot per attribute
  std::uint32_t categorical_width = 0;
  std::vector<double> text;

  std::vector<std::uint8_t> categorical_dense() const;
  bool operator==(const FeatureVector&) const = default;
};

/// Throws PreconditionError unless the text vector norm is 0 or 1.
FeatureVector encode(const ReplayEvent& event, std::vector<double> text_vector,
                     const CategoricalSchema& schema);

void to_json(nlohmann::json& j, const FeatureVector& v);
void from_json(const nlohmann::json& j, FeatureVector& v);

}  // namespace rtriage

#include <gtest/gtest.h>

#include <unordered_set>

#include "rtriage/core_model.hpp"
#include "rtriage/error.hpp"
#include "rtriage/random.hpp"
#include "test_support.hpp"

using namespace rtriage;
using namespace rtriage::testing;

namespace {

std::string random_statement(Rng& rng) {
  static const std::string alphabet = "abcXYZ  \t\n;*,()=019_";
  std::string s;
  const std::size_t n = rng.index(24);
  for (std::size_t i = 0; i < n; ++i) s += alphabet[rng.index(alphabet.size())];
  return s;
}

bool has_violation(const ValidationResult& r, const std::string& needle) {
  for (const auto& v : r.violations)
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(NormalizeStatement, Examples) {
  EXPECT_EQ(normalize_statement("SELECT  * FROM T;"), "select * from t");
  EXPECT_EQ(normalize_statement(""), "");
  EXPECT_EQ(normalize_statement("  a\t\nB ;; "), "a b");
}

TEST(NormalizeStatement, IdempotentOnFuzzedInput) {
  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const std::string x = random_statement(rng);
    const std::string once = normalize_statement(x);
    EXPECT_EQ(normalize_statement(once), once) << "input: '" << x << "'";
  }
}

TEST(HashStatement, NormalizationEquivalence) {
  EXPECT_EQ(hash_statement("SELECT 1"), hash_statement("select  1"));
  EXPECT_NE(hash_statement("select 1"), hash_statement("select 2"));
}

TEST(HashStatement, StableAcrossRuns) {
  // FNV-1a 64 of "select 1"; pinned so hashes stay comparable between builds.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : std::string("select 1")) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  EXPECT_EQ(hash_statement("SELECT 1;"), h);
  EXPECT_EQ(hash_from_hex(hash_to_hex(h)), h);
  EXPECT_EQ(hash_to_hex(h).size(), 16u);
}

TEST(HashStatement, CongruenceForNormalizedEquality) {
  Rng rng(12);
  for (int i = 0; i < 5000; ++i) {
    const std::string a = random_statement(rng), b = random_statement(rng);
    if (normalize_statement(a) == normalize_statement(b)) EXPECT_EQ(hash_statement(a), hash_statement(b));
    // Case and whitespace variants of one statement always agree.
    std::string upper = a;
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    EXPECT_EQ(hash_statement(a), hash_statement(upper + " ;"));
  }
}

TEST(HashStatement, NoCollisionsOnHundredThousandDistinctStatements) {
  std::unordered_set<std::uint64_t> seen;
  for (int i = 0; i < 100000; ++i)
    seen.insert(hash_statement("select c" + std::to_string(i) + " from t" + std::to_string(i % 97)));
  EXPECT_EQ(seen.size(), 100000u);
}

TEST(ValidateEvent, FailedWithoutErrorMessage) {
  ReplayEvent e = failed_event("e1", "S1", 1, "select 1", "boom");
  e.error_message.reset();
  const auto r = validate_event(e);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_violation(r, "missing error_message"));
}

TEST(ValidateEvent, FailedWithoutErrorCode) {
  ReplayEvent e = failed_event("e1", "S1", 1, "select 1", "boom");
  e.error_code.reset();
  EXPECT_TRUE(has_violation(validate_event(e), "missing error_code"));
}

TEST(ValidateEvent, SucceededWithoutErrorFieldsIsOk) {
  EXPECT_TRUE(validate_event(ok_event("e1", "S1", 1, "select 1")).ok());
}

TEST(ValidateEvent, SucceededWithErrorFieldsIsRejected) {
  ReplayEvent e = ok_event("e1", "S1", 1, "select 1");
  e.error_message = "x";
  EXPECT_FALSE(validate_event(e).ok());
}

TEST(ValidateEvent, SkippedWithoutReason) {
  ReplayEvent e = skipped_event("e1", "S1", 1, "create table t (a int)");
  e.skip_reason.reset();
  EXPECT_TRUE(has_violation(validate_event(e), "skip_reason"));
}

TEST(ValidateEvent, StaleStatementHash) {
  ReplayEvent e = ok_event("e1", "S1", 1, "select 1");
  e.statement_hash ^= 1;
  EXPECT_FALSE(validate_event(e).ok());
}

TEST(CategoricalSchema, WidthAndOovSlots) {
  std::vector<ReplayEvent> events = {failed_event("a", "S", 1, "s", "m", -303), failed_event("b", "S", 2, "s", "m", 111),
                                     failed_event("c", "S", 3, "s", "m", 100)};
  std::vector<const ReplayEvent*> ptrs;
  for (const auto& e : events) ptrs.push_back(&e);
  const auto schema = CategoricalSchema::fit(ptrs);
  EXPECT_EQ(schema.vocabularies[0], (std::vector<std::string>{"-303", "111", "100"}));
  // 3 codes + 1 request + 1 type + 1 subtype, plus one OOV slot each.
  EXPECT_EQ(schema.width(), 3u + 1 + 1 + 1 + 4);
  const auto no_oov = CategoricalSchema::fit(ptrs, false);
  EXPECT_EQ(no_oov.width(), 6u);
  for (const auto& vocab : schema.vocabularies) {
    std::set<std::string> uniq(vocab.begin(), vocab.end());
    EXPECT_EQ(uniq.size(), vocab.size());
  }
}

TEST(Hyperparameters, DefaultsAndValidation) {
  Hyperparameters hp;
  EXPECT_EQ(hp.problem_group_threshold, 0.95);
  EXPECT_EQ(hp.error_word_limit, 30);
  EXPECT_EQ(hp.token_budget, 128000);
  EXPECT_EQ(hp.per_class_replay_cap, 100);
  EXPECT_EQ(hp.cv_folds, 5);
  EXPECT_NO_THROW(validate(hp));

  Hyperparameters zero_weights = hp;
  zero_weights.w_categorical = 0;
  zero_weights.w_textual = 0;
  EXPECT_THROW(validate(zero_weights), ValidationError);

  Hyperparameters bad_tau = hp;
  bad_tau.problem_group_threshold = 0;
  EXPECT_THROW(validate(bad_tau), ValidationError);
  bad_tau.problem_group_threshold = 1.0;
  EXPECT_NO_THROW(validate(bad_tau));

  Hyperparameters bad_k = hp;
  bad_k.k_neighbors = 0;
  EXPECT_THROW(validate(bad_k), ValidationError);
}

TEST(Hyperparameters, JsonRoundTrip) {
  Hyperparameters hp;
  hp.k_neighbors = 7;
  hp.w_categorical = 0.25;
  hp.hash_seed = 99;
  EXPECT_EQ(nlohmann::json(hp).get<Hyperparameters>(), hp);
}

TEST(LabeledEvent, JsonRoundTrip) {
  LabeledEvent le = labeled(failed_event("e1", "S1", 4, "select 1", "boom"), "lab", LabelSource::predicted_certain,
                            0.93, "call failed x");
  EXPECT_EQ(nlohmann::json(le).get<LabeledEvent>(), le);
}

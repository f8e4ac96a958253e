#include <cmath>

#include "doctest.h"
#include "spc/policy.hpp"
#include "spc/rng.hpp"
#include "spc/toyworld.hpp"
#include "support.hpp"

using namespace spc;
using namespace spc::toy;

namespace {

// Independent arithmetic for the brute-force checks.
long fold(long v, char op, int x) {
  if (op == '+') return v + x;
  if (op == '-') return v - x;
  return v * x;
}

char sym(Op op) { return op == Op::Add ? '+' : op == Op::Sub ? '-' : '*'; }

std::vector<ToyProblem> small_grid() {
  std::vector<ToyProblem> out;
  const Op ops[] = {Op::Add, Op::Sub, Op::Mul};
  for (long start = -2; start <= 3; ++start)
    for (int n = 2; n <= 3; ++n) {
      int combos = 1;
      for (int i = 0; i < n; ++i) combos *= 12;
      for (int c = 0; c < combos; ++c) {
        std::vector<OpItem> items;
        int r = c;
        for (int i = 0; i < n; ++i) {
          items.push_back({ops[(r % 12) / 4], 1 + r % 4});
          r /= 12;
        }
        out.push_back(make_problem(start, items));
      }
    }
  return out;
}

}  // namespace

TEST_CASE("sample_problem") {
  CHECK(sample_problem(17, 3) == sample_problem(17, 3));
  CHECK(sample_problem(17, 3).ops.size() == 3);
  auto p = make_problem(3, {{Op::Add, 4}, {Op::Mul, 2}});
  CHECK(p.gold_answer == 14);
  try {
    sample_problem(1, 1);
    FAIL("expected DifficultyOutOfRange");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::DifficultyOutOfRange);
  }
  CHECK_THROWS_AS(sample_problem(1, 9), SpcError);
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto q = sample_problem(s, 2 + static_cast<int>(s % 7));
    long v = q.start_value;
    for (auto o : q.ops) {
      CHECK((o.operand >= 1 && o.operand <= 9));
      v = fold(v, sym(o.op), o.operand);
    }
    CHECK(q.gold_answer == v);
  }
}

TEST_CASE("statement and step text round trip") {
  auto p = make_problem(-3, {{Op::Sub, 4}, {Op::Mul, 2}});
  auto back = parse_statement(statement(p));
  REQUIRE(back.has_value());
  CHECK(*back == p);
  ToyStep s{-3, Op::Sub, 4, -7};
  CHECK(parse_step(format_step(s, false)) == s);
  CHECK(parse_step(format_step(s, true)) == s);
  CHECK_FALSE(parse_step("hello").has_value());
}

TEST_CASE("oracle_check examples") {
  auto p = make_problem(3, {{Op::Add, 4}, {Op::Mul, 2}});
  CHECK(oracle_check({3, Op::Add, 4, 7}, {}, p) == StepVerdict::Correct);
  CHECK(oracle_check({3, Op::Sub, 4, -1}, {}, p) == StepVerdict::Incorrect);
  CHECK(oracle_check({3, Op::Add, 4, 8}, {}, p) == StepVerdict::Incorrect);
  CHECK(oracle_check({7, Op::Mul, 2, 14}, {{3, Op::Add, 4, 7}}, p) == StepVerdict::Correct);
  CHECK(oracle_check({8, Op::Mul, 2, 16}, {{3, Op::Add, 4, 7}}, p) == StepVerdict::Incorrect);
  // a chained but wrong prefix: the step is judged against the claimed value
  CHECK(oracle_check({8, Op::Mul, 2, 16}, {{3, Op::Add, 4, 8}}, p) == StepVerdict::Correct);
  try {
    oracle_check({7, Op::Mul, 2, 14}, {{4, Op::Add, 4, 8}}, p);
    FAIL("expected InconsistentPrefix");
  } catch (const SpcError& e) {
    CHECK(e.code() == ErrorCode::InconsistentPrefix);
  }
}

TEST_CASE("oracle_check agrees with brute-force chain evaluation") {
  const Op ops[] = {Op::Add, Op::Sub, Op::Mul};
  long checked = 0;
  for (const auto& p : small_grid()) {
    std::vector<ToyStep> prefix;
    long v = p.start_value;
    for (std::size_t k = 0; k < p.ops.size(); ++k) {
      long truth = fold(v, sym(p.ops[k].op), p.ops[k].operand);
      for (long lhs = v - 1; lhs <= v + 1; ++lhs)
        for (auto op : ops)
          for (int x = 1; x <= 4; ++x) {
            long exact = fold(lhs, sym(op), x);
            for (long rhs : {exact - 1, exact, exact + 1, truth}) {
              bool want = lhs == v && op == p.ops[k].op && x == p.ops[k].operand && rhs == truth;
              auto got = oracle_check({lhs, op, x, rhs}, prefix, p);
              CHECK((got == StepVerdict::Correct) == want);
              ++checked;
            }
          }
      prefix.push_back({v, p.ops[k].op, p.ops[k].operand, truth});
      v = truth;
    }
  }
  CHECK(checked > 100000);
}

TEST_CASE("apply_perturbation examples") {
  ToyStep s{3, Op::Add, 4, 7};
  CHECK(apply_perturbation(s, PerturbationAction::OffByOne) == ToyStep{3, Op::Add, 4, 8});
  CHECK(apply_perturbation(s, PerturbationAction::SwapOperator) == ToyStep{3, Op::Mul, 4, 12});
  CHECK(apply_perturbation(s, PerturbationAction::SignFlip) == ToyStep{3, Op::Sub, 4, -1});
  for (auto a : kAllPerturbations) {
    CHECK(apply_perturbation(s, a) == apply_perturbation(s, a));
    CHECK_FALSE(apply_perturbation(s, a) == s);
    CHECK(parse_perturbation(to_string(a)) == a);
    CHECK(perturbation_for(error_type_of(a)) == a);
  }
}

TEST_CASE("every perturbation of a correct step is incorrect") {
  for (const auto& p : small_grid()) {
    auto sol = correct_solution(p);
    for (std::size_t k = 0; k < sol.size(); ++k) {
      std::vector<ToyStep> prefix(sol.begin(), sol.begin() + static_cast<long>(k));
      REQUIRE(oracle_check(sol[k], prefix, p) == StepVerdict::Correct);
      for (auto a : kAllPerturbations) {
        ToyStep bad;
        try {
          bad = apply_perturbation(sol[k], a);
        } catch (const SpcError& e) {
          CHECK(e.code() == ErrorCode::FixedPointPerturbation);
          continue;
        }
        CHECK(oracle_check(bad, prefix, p) == StepVerdict::Incorrect);
      }
    }
  }
}

TEST_CASE("mistake classes") {
  auto p = make_problem(3, {{Op::Add, 4}, {Op::Mul, 2}});
  CHECK(classify_mistake(p, 0, {3, Op::Add, 4, 7}, 3) == MistakeClass::None);
  CHECK(classify_mistake(p, 0, {3, Op::Add, 4, 8}, 3) == MistakeClass::ArithmeticSlip);
  CHECK(classify_mistake(p, 0, {3, Op::Mul, 4, 12}, 3) == MistakeClass::WrongOperator);
}

TEST_CASE("categorical policy log probabilities") {
  CategoricalPolicy pol("f", {"bias"}, {"a", "b", "c", "d", "e"});
  FeatureVector x;
  x.add(0);
  for (std::size_t a = 0; a < 5; ++a) CHECK(pol.log_prob(x, a) == doctest::Approx(std::log(0.2)));
  Rng rng(3);
  CategoricalPolicy rnd("f", {"u", "v", "w"}, {"a", "b", "c", "d", "e"});
  for (auto& w : rnd.parameters()) w = rng.uniform01() * 4 - 2;
  FeatureVector y;
  y.add(0, 0.7);
  y.add(2, -1.3);
  double total = 0;
  for (std::size_t a = 0; a < 5; ++a) total += std::exp(rnd.log_prob(y, a));
  CHECK(std::abs(total - 1.0) <= 1e-12);
  auto before = rnd.log_prob(y, 2);
  rnd.weight(0, 2) += 0.5;
  CHECK(rnd.log_prob(y, 2) > before);
  CHECK_THROWS_AS(pol.log_prob(x, "zzz"), SpcError);
}

TEST_CASE("policy sampling") {
  CategoricalPolicy pol("f", {"bias"}, {"a", "b", "c", "d", "e"});
  FeatureVector x;
  x.add(0);
  CHECK(pol.sample(x, 77) == pol.sample(x, 77));
  std::vector<int> counts(5, 0);
  for (std::uint64_t s = 0; s < 100000; ++s) ++counts[pol.sample(x, s)];
  for (int c : counts) CHECK(std::abs(c / 100000.0 - 0.2) <= 0.01);
  pol.weight(0, 3) = 20.0;
  int hits = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) hits += pol.sample(x, s) == 3;
  CHECK(hits >= 9990);
}

TEST_CASE("log-prob gradient matches central differences") {
  Rng rng(11);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    CategoricalPolicy pol("f", {"u", "v", "w", "z"}, {"a", "b", "c", "d", "e"});
    for (auto& w : pol.parameters()) w = rng.uniform01() * 4 - 2;
    FeatureVector x;
    for (std::size_t f = 0; f < 4; ++f)
      if (rng.bernoulli(0.7)) x.add(f, rng.uniform01() * 2 - 1);
    if (x.entries.empty()) x.add(0, 1.0);
    auto action = rng.uniform_index(5);
    std::vector<double> grad(pol.parameters().size(), 0.0);
    pol.accumulate_log_prob_gradient(x, action, 1.0, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
      auto plus = pol, minus = pol;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      double fd = (plus.log_prob(x, action) - minus.log_prob(x, action)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("policy snapshots round trip") {
  test::TempDir dir("policy");
  CategoricalPolicy pol("f", {"u", "v"}, {"a", "b"});
  pol.parameters() = {0.1, -0.2, 0.3, 1e-17};
  pol.save(dir.path() / "p.json");
  CHECK(CategoricalPolicy::load(dir.path() / "p.json") == pol);
  auto j = pol.to_json();
  j["version"] = 999;
  CHECK_THROWS_AS(CategoricalPolicy::from_json(j), SpcError);
}

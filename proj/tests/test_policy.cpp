#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "dama/error.hpp"
#include "dama/policy.hpp"
#include "dama/responsiveness.hpp"
#include "test_support.hpp"

using namespace dama;
using dama::test::Gen;

TEST_CASE("log_prob small cases") {
    PolicyParams uniform(1, 4);
    const std::vector<TokenId> three{0, 1, 3};
    CHECK(log_prob(uniform, 0, three) == doctest::Approx(-4.1588830833596719).epsilon(1e-15));

    PolicyParams two(1, 2, std::vector<double>{std::log(3.0), 0.0});
    CHECK(log_prob(two, 0, std::vector<TokenId>{0}) == doctest::Approx(-0.2876820724517809).epsilon(1e-15));

    CHECK_THROWS_AS(log_prob(uniform, 0, std::vector<TokenId>{4}), InputError);
    CHECK_THROWS_AS(log_prob(uniform, 1, three), InputError);
}

TEST_CASE("log_prob gradient small case and row sums") {
    PolicyParams uniform(1, 2);
    const auto g = log_prob_gradient(uniform, 0, std::vector<TokenId>{0});
    CHECK(g.context_id == 0);
    CHECK(g.row[0] == doctest::Approx(0.5));
    CHECK(g.row[1] == doctest::Approx(-0.5));

    Gen gen(2);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t vocab = gen.index(2, 30);
        auto p = PolicyParams::random(3, vocab, gen.engine()(), 3.0);
        std::vector<TokenId> tokens(gen.index(1, 10));
        for (auto& t : tokens) t = static_cast<TokenId>(gen.index(0, vocab - 1));
        const auto grad = log_prob_gradient(p, 2, tokens);
        CHECK(std::abs(std::accumulate(grad.row.begin(), grad.row.end(), 0.0)) <= 1e-12);

        // Central differences on the row.
        const double h = 1e-5;
        std::vector<double> fd(vocab);
        for (std::size_t v = 0; v < vocab; ++v) {
            const double keep = p.row(2)[v];
            p.row(2)[v] = keep + h;
            const double up = log_prob(p, 2, tokens);
            p.row(2)[v] = keep - h;
            const double down = log_prob(p, 2, tokens);
            p.row(2)[v] = keep;
            fd[v] = (up - down) / (2 * h);
        }
        CHECK(dama::test::relative_error(grad.row, fd) <= 1e-7);
    }
}

TEST_CASE("softmax rows sum to one") {
    auto p = PolicyParams::random(4, 50, 9, 5.0);
    for (std::size_t c = 0; c < 4; ++c) {
        const auto s = row_softmax(p, c);
        CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    }
    PolicyParams big(1, 3, std::vector<double>{1000.0, 0.0, -1000.0});
    const auto s = row_softmax(big, 0);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(log_prob(big, 0, std::vector<TokenId>{2})));
}

TEST_CASE("reference snapshot is immutable") {
    auto policy = PolicyParams::random(2, 5, 1);
    const auto ref = snapshot_reference(policy);
    const std::vector<TokenId> tokens{1, 2, 2};
    const double before = log_prob(ref.params(), 1, tokens);
    std::vector<double> grad(policy.logits().size(), 0.0);
    grad[policy.vocab_size() + 1] = 0.7;  // row 1, token 1
    apply_gradient(policy, grad, 1.0);
    CHECK(log_prob(ref.params(), 1, tokens) == before);
    CHECK(log_prob(policy, 1, tokens) != before);

    const auto fresh = snapshot_reference(policy);
    const std::vector<double> lp{log_prob(policy, 0, tokens)};
    const std::vector<double> lr{log_prob(fresh.params(), 0, tokens)};
    CHECK(reward_gaps(lp, lr, lp, lr, 0.1) == std::vector<double>{0.0});
}

TEST_CASE("apply_gradient") {
    auto p = PolicyParams::random(2, 3, 4);
    const auto start = p;
    apply_gradient(p, std::vector<double>(6, 0.0), 0.5);
    CHECK(p == start);
    apply_gradient(p, std::vector<double>(6, 1.0), 1.0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(p.logits()[i] == doctest::Approx(start.logits()[i] - 1.0));
    CHECK_THROWS_AS(apply_gradient(p, std::vector<double>(5, 1.0), 1.0), InputError);

    // Clipping bounds the step norm.
    auto q = start;
    apply_gradient(q, std::vector<double>(6, 10.0), 1.0, 1.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < 6; ++i) norm += std::pow(q.logits()[i] - start.logits()[i], 2);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0));
}

TEST_CASE("random policies are reproducible") {
    CHECK(PolicyParams::random(3, 7, 42) == PolicyParams::random(3, 7, 42));
    CHECK_FALSE(PolicyParams::random(3, 7, 42) == PolicyParams::random(3, 7, 43));
    const auto small = PolicyParams::random(3, 7, 42, 0.1);
    for (double x : small.logits()) {
        CHECK(x >= -0.1);
        CHECK(x <= 0.1);
    }
}

TEST_CASE("checkpoint round trip is exact") {
    auto dir = dama::test::scratch_dir("ckpt");
    auto policy = PolicyParams::random(3, 5, 8, 2.0);
    const auto ref = snapshot_reference(PolicyParams::random(3, 5, 9));
    save_checkpoint(dir / "c.json", policy, ref);
    const auto back = load_checkpoint(dir / "c.json");
    CHECK(back.policy == policy);
    CHECK(back.reference == ref.params());

    dama::test::write_text(dir / "bad.json", R"({"context_count":2,"vocab_size":2,"logits":[1,2,3]})");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), InputError);
}

TEST_CASE("shift invariance and step linearity") {
    auto p = PolicyParams::random(2, 6, 3, 1.0);
    const std::vector<TokenId> tokens{0, 5, 5, 2};
    const double before = log_prob(p, 1, tokens);
    for (double& x : p.row(1)) x += 7.5;
    CHECK(log_prob(p, 1, tokens) == doctest::Approx(before).epsilon(1e-13));

    Gen gen(6);
    const auto grad = gen.vec(p.logits().size(), -1, 1);
    auto halves = p;
    apply_gradient(halves, grad, 0.05);
    apply_gradient(halves, grad, 0.05);
    auto full = p;
    apply_gradient(full, grad, 0.1);
    for (std::size_t i = 0; i < full.logits().size(); ++i) {
        CHECK(halves.logits()[i] == doctest::Approx(full.logits()[i]).epsilon(1e-14));
    }
}

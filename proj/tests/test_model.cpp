#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ktrace/io.hpp"
#include "ktrace/model.hpp"
#include "ktrace/rng.hpp"
#include "test_util.hpp"

using namespace ktrace;

namespace {

ModelDims small_dims(Mode mode) {
    ModelDims dims;
    dims.d_k = 6;
    dims.d_h = 10;
    dims.m = 4;
    dims.k_clusters = 3;
    dims.concept_count = 4;
    dims.exercise_count = 7;
    (void)mode;
    return dims;
}

}  // namespace

TEST_CASE("init_params is reproducible, bounded, and zero-biased") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams a = init_params(dims, Mode::aa_dkta, 5);
    ModelParams b = init_params(dims, Mode::aa_dkta, 5);
    CHECK(a.B.data == b.B.data);
    CHECK(a.W_hh.data == b.W_hh.data);
    CHECK(a.W2 == b.W2);

    for (double v : a.b_h) CHECK(v == 0.0);
    for (double v : a.b1) CHECK(v == 0.0);
    CHECK(a.b2 == 0.0);

    auto check_bounds = [](const Matrix& m) {
        double s = std::sqrt(6.0 / (m.rows + m.cols));
        for (double v : m.data) {
            CHECK(v > -s);
            CHECK(v < s);
        }
    };
    check_bounds(a.B);
    check_bounds(a.F_key);
    check_bounds(a.F_val);
    check_bounds(a.W_xh);
    check_bounds(a.W_hh);
    check_bounds(a.W1);
}

TEST_CASE("rnn_step basics") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 1);
    const int in_w = dims.input_width(Mode::aa_dkta);

    SUBCASE("zero weights give the zero state") {
        ModelParams zeroed = params;
        zeroed.W_xh = Matrix(dims.d_h, in_w);
        zeroed.W_hh = Matrix(dims.d_h, dims.d_h);
        zeroed.b_h.assign(dims.d_h, 0.0);
        Vec h = rnn_step(Vec(dims.d_h, 0.5), Vec(in_w, 1.0), zeroed);
        for (double v : h) CHECK(v == 0.0);
    }
    SUBCASE("components stay strictly inside (-1, 1)") {
        Rng rng(2);
        Vec h(dims.d_h), x(in_w);
        for (double& v : h) v = rng.uniform(-0.9, 0.9);
        for (double& v : x) v = rng.uniform(0.0, 1.0);
        Vec out = rnn_step(h, x, params);
        for (double v : out) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
    }
    SUBCASE("dimension mismatch throws") {
        CHECK_THROWS_AS(rnn_step(Vec(dims.d_h + 1, 0.0), Vec(in_w, 0.0), params),
                        std::invalid_argument);
        CHECK_THROWS_AS(rnn_step(Vec(dims.d_h, 0.0), Vec(in_w + 2, 0.0), params),
                        std::invalid_argument);
    }
    SUBCASE("d(sum h)/dW_hh matches finite differences") {
        Rng rng(3);
        Vec h_prev(dims.d_h), x(in_w, 0.0);
        for (double& v : h_prev) v = rng.uniform(-0.5, 0.5);
        x[1] = 1.0;
        x[2 * dims.m] = 1.0;
        Vec h = rnn_step(h_prev, x, params);
        const double eps = 1e-6;
        for (int r = 0; r < dims.d_h; ++r) {
            for (int c = 0; c < dims.d_h; ++c) {
                double analytic = (1.0 - h[r] * h[r]) * h_prev[c];
                double original = params.W_hh(r, c);
                params.W_hh(r, c) = original + eps;
                double up = rnn_step(h_prev, x, params)[r];
                params.W_hh(r, c) = original - eps;
                double down = rnn_step(h_prev, x, params)[r];
                params.W_hh(r, c) = original;
                CHECK(analytic == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("attention_weights is a stable softmax") {
    SUBCASE("equal logits give the uniform distribution") {
        Matrix f_key(3, 5);  // all zeros: every logit is 0
        Vec v{0.3, -0.2, 0.9};
        Vec alpha = attention_weights(v, f_key);
        for (double a : alpha) CHECK(a == doctest::Approx(0.2));
    }
    SUBCASE("a dominant logit saturates") {
        Matrix f_key(1, 4);
        f_key(0, 2) = 50.0;
        Vec alpha = attention_weights(Vec{1.0}, f_key);
        CHECK(alpha[2] > 0.999);
    }
    SUBCASE("shift invariance") {
        Rng rng(4);
        Matrix f_key(1, 6);
        for (double& v : f_key.data) v = rng.uniform(-2.0, 2.0);
        Vec alpha = attention_weights(Vec{1.0}, f_key);
        for (double& v : f_key.data) v += 3.25;  // adds a constant to every logit
        Vec shifted = attention_weights(Vec{1.0}, f_key);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            CHECK(alpha[i] == doctest::Approx(shifted[i]).epsilon(1e-12));
        }
    }
    SUBCASE("sums to one even for extreme logits") {
        Matrix f_key(1, 8);
        f_key(0, 0) = 1e4;
        f_key(0, 1) = -1e4;
        f_key(0, 2) = 9999.0;
        Vec alpha = attention_weights(Vec{1.0}, f_key);
        double total = 0.0;
        for (double a : alpha) {
            CHECK(a >= 0.0);
            total += a;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("mastery_read is a convex combination of value columns") {
    Matrix f_val(3, 4);
    Rng rng(6);
    for (double& v : f_val.data) v = rng.uniform(-1.0, 1.0);

    SUBCASE("one-hot attention selects a column") {
        Vec alpha{0.0, 0.0, 1.0, 0.0};
        CHECK(mastery_read(alpha, f_val) == f_val.col(2));
    }
    SUBCASE("uniform attention is the column mean") {
        Vec alpha(4, 0.25);
        Vec w = mastery_read(alpha, f_val);
        for (int r = 0; r < 3; ++r) {
            double mean = (f_val(r, 0) + f_val(r, 1) + f_val(r, 2) + f_val(r, 3)) / 4.0;
            CHECK(w[r] == doctest::Approx(mean));
        }
    }
    SUBCASE("norm bounded by the largest column norm") {
        Vec alpha{0.4, 0.3, 0.2, 0.1};
        Vec w = mastery_read(alpha, f_val);
        double max_col = 0.0;
        for (int c = 0; c < 4; ++c) {
            Vec col = f_val.col(c);
            max_col = std::max(max_col, std::sqrt(dot(col, col)));
        }
        CHECK(std::sqrt(dot(w, w)) <= max_col + 1e-12);
    }
}

TEST_CASE("predict_step") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 8);
    Rng rng(9);
    Vec w(dims.d_k), v(dims.d_k), h(dims.d_h);
    for (double& x : w) x = rng.uniform(-1.0, 1.0);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    for (double& x : h) x = rng.uniform(-0.9, 0.9);

    SUBCASE("zero output head pins y at one half") {
        ModelParams zeroed = params;
        zeroed.W2.assign(dims.head_width(), 0.0);
        zeroed.b2 = 0.0;
        Vec p;
        double y = 0.0;
        predict_step(w, v, h, zeroed, p, y);
        CHECK(y == 0.5);
    }
    SUBCASE("probability stays strictly inside (0, 1)") {
        Vec p;
        double y = 0.0;
        predict_step(w, v, h, params, p, y);
        CHECK(y > 0.0);
        CHECK(y < 1.0);
    }
}

TEST_CASE("forward_sequence structure") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 12);

    SUBCASE("empty input gives empty output") {
        CHECK(forward_sequence({}, params).empty());
    }
    SUBCASE("a single step runs from the zero hidden state") {
        auto [steps, labels] = testutil::random_chunk(1, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 21);
        auto outputs = forward_sequence(steps, params);
        REQUIRE(outputs.size() == 1);
        for (double v : outputs[0].h) CHECK(v == 0.0);
        CHECK(outputs[0].alpha.size() == static_cast<std::size_t>(dims.concept_count));
        double total = 0.0;
        for (double a : outputs[0].alpha) total += a;
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
    SUBCASE("causality: changing later steps never changes y_t") {
        auto [steps, labels] = testutil::random_chunk(12, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 22);
        auto outputs = forward_sequence(steps, params);
        auto mutated = steps;
        // rewrite everything after t = 5
        auto [tail, tail_labels] = testutil::random_chunk(6, dims.m, dims.k_clusters,
                                                          dims.exercise_count, 500);
        for (std::size_t i = 6; i < mutated.size(); ++i) mutated[i] = tail[i - 6];
        auto outputs2 = forward_sequence(mutated, params);
        for (std::size_t t = 0; t <= 5; ++t) CHECK(outputs[t].y == outputs2[t].y);
    }
}

TEST_CASE("ablation modes change the parameter census") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams full = init_params(dims, Mode::aa_dkta, 3);
    ModelParams plain = init_params(dims, Mode::dkt, 3);

    // cluster block present vs absent
    CHECK(full.W_xh.cols == 2 * dims.m + dims.k_clusters);
    CHECK(plain.W_xh.cols == 2 * dims.m);

    // attention tensors vs linear read
    auto names = [](ModelParams& p) {
        std::vector<std::string> out;
        for (const auto& view : tensor_views(p)) out.push_back(view.name);
        return out;
    };
    auto full_names = names(full);
    auto plain_names = names(plain);
    CHECK(std::count(full_names.begin(), full_names.end(), "F_key") == 1);
    CHECK(std::count(full_names.begin(), full_names.end(), "W_read") == 0);
    CHECK(std::count(plain_names.begin(), plain_names.end(), "F_key") == 0);
    CHECK(std::count(plain_names.begin(), plain_names.end(), "W_read") == 1);

    // the plain mode is exactly: one-hot input -> recurrent cell -> head
    std::vector<std::string> expected{"B", "W_read", "W_xh", "W_hh", "b_h", "W1", "b1", "W2", "b2"};
    CHECK(plain_names == expected);
}

TEST_CASE("sequence_loss values") {
    StepOutput out;
    out.y = 0.5;
    SUBCASE("coin-flip prediction of a positive costs ln 2") {
        CHECK(sequence_loss({out}, {1}) == doctest::Approx(0.6931471805599453));
    }
    SUBCASE("confident correct prediction costs almost nothing") {
        StepOutput sure;
        sure.y = 1.0 - 1e-9;
        CHECK(sequence_loss({sure}, {1}) < 1e-6);
    }
    SUBCASE("label symmetry") {
        Rng rng(31);
        for (int trial = 0; trial < 50; ++trial) {
            StepOutput a;
            a.y = rng.uniform(0.001, 0.999);
            StepOutput b;
            b.y = 1.0 - a.y;
            CHECK(sequence_loss({a}, {1}) == doctest::Approx(sequence_loss({b}, {0})));
        }
    }
    SUBCASE("length mismatch throws") {
        CHECK_THROWS_AS(sequence_loss({out}, {1, 0}), std::invalid_argument);
    }
}

TEST_CASE("gradients match finite differences in every mode") {
    for (Mode mode : {Mode::dkt, Mode::dkt_a, Mode::aa_dkt, Mode::aa_dkta}) {
        CAPTURE(mode_to_string(mode));
        ModelDims dims = small_dims(mode);
        ModelParams params = init_params(dims, mode, 77);
        auto [steps, labels] = testutil::random_chunk(9, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 99);
        auto report = testutil::check_gradients(params, steps, labels);
        INFO(report.worst_location);
        CHECK(report.ok);
    }
}

TEST_CASE("gradients match finite differences with tagged-only attention") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 13);
    params.attend_tagged_only = true;
    auto [steps, labels] = testutil::random_chunk(8, dims.m, dims.k_clusters,
                                                  dims.exercise_count, 14);
    auto report = testutil::check_gradients(params, steps, labels);
    INFO(report.worst_location);
    CHECK(report.ok);
}

TEST_CASE("backward_sequence edge cases") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 55);

    SUBCASE("empty sequence gives zero gradients") {
        Gradients g = backward_sequence({}, {}, params);
        CHECK(g.global_norm() == 0.0);
    }
    SUBCASE("a duplicated chunk contributes exactly twice the gradient") {
        auto [steps, labels] = testutil::random_chunk(7, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 56);
        Gradients once = backward_sequence(steps, labels, params);
        Gradients twice = backward_sequence(steps, labels, params);
        twice.add(once);
        Gradients doubled = backward_sequence(steps, labels, params);
        doubled.scale(2.0);
        CHECK(twice.W_hh.data == doubled.W_hh.data);
        CHECK(twice.B.data == doubled.B.data);
        CHECK(twice.b2 == doubled.b2);
    }
    SUBCASE("loss out-parameter matches sequence_loss") {
        auto [steps, labels] = testutil::random_chunk(7, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 57);
        double loss = 0.0;
        backward_sequence(steps, labels, params, &loss);
        CHECK(loss == sequence_loss(forward_sequence(steps, params), labels));
    }
}

TEST_CASE("gradient clipping caps the global norm") {
    ModelDims dims = small_dims(Mode::aa_dkta);
    ModelParams params = init_params(dims, Mode::aa_dkta, 61);
    auto [steps, labels] = testutil::random_chunk(40, dims.m, dims.k_clusters,
                                                  dims.exercise_count, 62);
    Gradients g = backward_sequence(steps, labels, params);
    double norm = g.global_norm();
    Gradients clipped = g;
    clipped.clip_global_norm(norm * 0.25);
    CHECK(clipped.global_norm() == doctest::Approx(norm * 0.25));
    Gradients untouched = g;
    untouched.clip_global_norm(norm * 4.0);
    CHECK(untouched.W_hh.data == g.W_hh.data);
}

TEST_CASE("checkpoints reload bit-exactly") {
    std::filesystem::create_directories("tmp_model");
    for (Mode mode : {Mode::dkt, Mode::aa_dkta}) {
        ModelDims dims = small_dims(mode);
        ModelParams params = init_params(dims, mode, 314);
        auto [steps, labels] = testutil::random_chunk(10, dims.m, dims.k_clusters,
                                                      dims.exercise_count, 315);
        // move off the initialization manifold so the test is not trivial
        for (auto& view : tensor_views(params)) {
            for (std::size_t i = 0; i < view.size; ++i) view.data[i] += 1e-3 * (i % 7);
        }
        std::string path = "tmp_model/checkpoint_" + mode_to_string(mode) + ".json";
        save_checkpoint(path, params, 314);
        ModelParams reloaded = load_checkpoint(path);
        CHECK(reloaded.mode == params.mode);
        auto a = forward_sequence(steps, params);
        auto b = forward_sequence(steps, reloaded);
        REQUIRE(a.size() == b.size());
        for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t].y == b[t].y);
        CHECK(reloaded.W_hh.data == params.W_hh.data);
        CHECK(reloaded.B.data == params.B.data);
    }
}

#include "fixtures.hpp"

#include "surge/error.hpp"
#include "surge/layers.hpp"
#include "surge/optim.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace surge;
using nn::Matrix;
using nn::Tensor;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("surge_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("linear layer computes x W + b") {
    nn::ParamStore store;
    nn::Rng rng(1);
    nn::Linear lin(store, "lin", 3, 2, rng);
    lin.bias.mutable_value() << 0.5, -1.0;
    Matrix x = fixtures::random_matrix(4, 3, 2);
    Matrix expected = x * lin.weight.value();
    expected.rowwise() += lin.bias.value().row(0);
    CHECK(lin(Tensor(x, false)).value().isApprox(expected, 1e-14));
    CHECK(store.names() == std::vector<std::string>{"lin.weight", "lin.bias"});
    CHECK(store.parameter_count() == 8);
}

TEST_CASE("duplicate parameter names are rejected") {
    nn::ParamStore store;
    nn::Rng rng(1);
    (void)store.create("w", 1, 1, nn::Init::Zeros, rng);
    CHECK_THROWS_AS((void)store.create("w", 1, 1, nn::Init::Zeros, rng), Error);
}

TEST_CASE("one AdamW step matches the closed form") {
    nn::ParamStore store;
    nn::Rng rng(1);
    Tensor p = store.create("p", 1, 1, nn::Init::Ones, rng);
    nn::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.01;
    nn::AdamW opt(cfg);
    nn::scale(p, 0.5).backward();  // gradient 0.5
    opt.step(store, 0.1);
    // Bias-corrected moments equal g and g^2 after one step.
    const double expected = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(p.value()(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    nn::ParamStore store;
    nn::Rng rng(3);
    Tensor w = store.create("w", 2, 2, nn::Init::Normal, rng);
    const Matrix before = w.value();
    nn::AdamW opt(nn::AdamWConfig{});
    nn::sum(nn::mul(w, w)).backward();
    opt.step(store, 0.0);
    CHECK(w.value() == before);
}

TEST_CASE("AdamW refuses non-finite gradients") {
    nn::ParamStore store;
    nn::Rng rng(3);
    Tensor w = store.create("w", 1, 1, nn::Init::Ones, rng);
    w.node()->grad = Matrix::Constant(1, 1, std::nan(""));
    nn::AdamW opt(nn::AdamWConfig{});
    CHECK_THROWS_AS(opt.step(store, 1e-3), Error);
}

TEST_CASE("gradient clipping rescales to the maximum norm") {
    nn::ParamStore store;
    nn::Rng rng(3);
    Tensor a = store.create("a", 1, 2, nn::Init::Zeros, rng);
    Tensor b = store.create("b", 1, 1, nn::Init::Zeros, rng);
    a.node()->grad = (Matrix(1, 2) << 3.0, 0.0).finished();
    b.node()->grad = Matrix::Constant(1, 1, 4.0);
    CHECK(nn::clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad()(0, 0) == doctest::Approx(0.6));
    CHECK(b.grad()(0, 0) == doctest::Approx(0.8));
    CHECK(nn::clip_grad_norm(store, 10.0) == doctest::Approx(1.0));
    CHECK(b.grad()(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("warmup then linear decay") {
    CHECK(nn::warmup_linear_lr(1.0, 0, 6, 100) == doctest::Approx(1.0 / 6.0));
    CHECK(nn::warmup_linear_lr(1.0, 5, 6, 100) == doctest::Approx(1.0));
    CHECK(nn::warmup_linear_lr(1.0, 6, 6, 100) == doctest::Approx(1.0));
    CHECK(nn::warmup_linear_lr(1.0, 53, 6, 100) == doctest::Approx(0.5));
    CHECK(nn::warmup_linear_lr(1.0, 100, 6, 100) == doctest::Approx(0.0));
    double prev = 2.0;
    for (long s = 6; s <= 100; ++s) {
        const double lr = nn::warmup_linear_lr(1.0, s, 6, 100);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("finite-difference check flags a wrong backward rule") {
    Tensor a = fixtures::param(1, 3, 5);
    auto wrong_square = [&] {
        return nn::make_result(a.value().array().square().matrix(), {a}, [a](nn::Node& n) {
            a.node()->accumulate(n.grad.cwiseProduct(a.value()));  // should be 2a
        });
    };
    auto f = [&] { return nn::sum(wrong_square()); };
    CHECK(nn::grad_check(f, {a}).max_rel_error > 0.1);
}

TEST_CASE("finite-difference check retries across a ReLU kink") {
    Tensor near(nn::Matrix{{5e-5}}, true);
    auto g = [&] { return nn::sum(nn::relu(near)); };
    nn::GradCheckOptions opt;
    opt.epsilon = 1e-4;
    CHECK(nn::grad_check(g, {near}, opt).max_rel_error > 0.1);

    Tensor a(nn::Matrix{{5e-5, 0.0, 1.0}}, true);
    auto f = [&] { return nn::sum(nn::relu(a)); };
    opt.kink_retries = 2;
    const auto r = nn::grad_check(f, {a}, opt);
    CHECK(r.coords_checked == 3);
    CHECK(r.nonsmooth_coords == 1);  // the kink at exactly zero never goes away
    CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("snapshot and restore round-trip values") {
    nn::ParamStore store;
    nn::Rng rng(9);
    Tensor w = store.create("w", 3, 3, nn::Init::Normal, rng);
    const auto snap = store.snapshot();
    w.mutable_value().setZero();
    store.restore(snap);
    CHECK(w.value() == snap[0]);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
    nn::ParamStore a;
    nn::Rng rng(11);
    (void)a.create("emb", 5, 4, nn::Init::Normal, rng);
    (void)a.create("mlp.0.weight", 4, 3, nn::Init::Normal, rng);
    (void)a.create("mlp.0.bias", 1, 3, nn::Init::Ones, rng);
    const auto d1 = scratch_dir("ckpt1");
    const auto d2 = scratch_dir("ckpt2");
    nn::save_checkpoint(a, d1);

    nn::ParamStore b;
    nn::Rng other(99);
    (void)b.create("emb", 5, 4, nn::Init::Zeros, other);
    (void)b.create("mlp.0.weight", 4, 3, nn::Init::Zeros, other);
    (void)b.create("mlp.0.bias", 1, 3, nn::Init::Zeros, other);
    nn::load_checkpoint(b, d1);
    nn::save_checkpoint(b, d2);
    CHECK(slurp(d1 / "weights.bin") == slurp(d2 / "weights.bin"));
    CHECK(slurp(d1 / "manifest.tsv") == slurp(d2 / "manifest.tsv"));
    CHECK(slurp(d1 / "manifest.tsv").starts_with("emb\t5x4\tfloat32\n"));
    CHECK(b.at("emb").value().cast<float>() == a.at("emb").value().cast<float>());
}

TEST_CASE("checkpoint load rejects mismatched stores") {
    nn::ParamStore a;
    nn::Rng rng(11);
    (void)a.create("w", 2, 2, nn::Init::Normal, rng);
    const auto dir = scratch_dir("ckpt3");
    nn::save_checkpoint(a, dir);

    nn::ParamStore wrong_shape;
    (void)wrong_shape.create("w", 2, 3, nn::Init::Zeros, rng);
    CHECK_THROWS_AS(nn::load_checkpoint(wrong_shape, dir), Error);

    nn::ParamStore wrong_name;
    (void)wrong_name.create("v", 2, 2, nn::Init::Zeros, rng);
    CHECK_THROWS_AS(nn::load_checkpoint(wrong_name, dir), Error);

    std::ofstream(dir / "weights.bin", std::ios::binary | std::ios::trunc) << "xx";
    nn::ParamStore same;
    (void)same.create("w", 2, 2, nn::Init::Zeros, rng);
    CHECK_THROWS_AS(nn::load_checkpoint(same, dir), Error);
}

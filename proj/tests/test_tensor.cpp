#include "fixtures.hpp"

#include "surge/error.hpp"
#include "surge/optim.hpp"
#include "surge/tensor.hpp"

#include <doctest.h>

#include <cmath>

using namespace surge;
using nn::Matrix;
using nn::Tensor;

namespace {

double check(const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
    nn::GradCheckOptions opt;
    opt.max_coords_per_tensor = 64;
    return nn::grad_check(f, params, opt).max_rel_error;
}

}  // namespace

TEST_CASE("elementwise and matrix ops have correct gradients") {
    Tensor a = fixtures::param(3, 4, 1);
    Tensor b = fixtures::param(4, 2, 2);
    Tensor c = fixtures::param(3, 2, 3);
    Tensor row = fixtures::param(1, 2, 4);
    auto f = [&] {
        Tensor x = nn::matmul(a, b);
        x = nn::add_row(nn::mul(x, c), row);
        x = nn::sub(nn::exp(nn::scale(x, 0.3)), nn::mul_row(x, row));
        x = nn::relu(x) + nn::log(nn::clamp_min(nn::exp(x), 1e-3));
        return nn::sum(nn::mul(x, x));
    };
    CHECK(check(f, {a, b, c, row}) < 1e-6);
}

TEST_CASE("matmul_nt and transpose agree with matmul") {
    Matrix a = fixtures::random_matrix(3, 5, 7);
    Matrix b = fixtures::random_matrix(4, 5, 8);
    Tensor x(a, false);
    Tensor y(b, false);
    CHECK(nn::matmul_nt(x, y).value().isApprox(a * b.transpose(), 1e-14));
    CHECK(nn::transpose(y).value().isApprox(b.transpose(), 1e-14));
}

TEST_CASE("softmax over columns matches a direct evaluation") {
    Matrix m = fixtures::random_matrix(3, 5, 11, 3.0);
    Tensor s = nn::softmax(Tensor(m, false));
    Tensor ls = nn::log_softmax(Tensor(m, false));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double z = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            z += std::exp(m(r, c));
        }
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            CHECK(s.value()(r, c) == doctest::Approx(std::exp(m(r, c)) / z).epsilon(1e-12));
            CHECK(ls.value()(r, c) == doctest::Approx(m(r, c) - std::log(z)).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax over rows normalizes each column") {
    Matrix m = fixtures::random_matrix(4, 3, 12);
    Tensor s = nn::softmax(Tensor(m, false), nn::Axis::Rows);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        CHECK(s.value().col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax is stable for large logits") {
    Matrix m(1, 3);
    m << 1000.0, 1001.0, 999.0;
    Tensor s = nn::softmax(Tensor(m, false));
    CHECK(s.value().allFinite());
    CHECK(s.value().sum() == doctest::Approx(1.0));
    CHECK(std::isfinite(nn::logsumexp(Tensor(m, false)).item()));
}

TEST_CASE("softmax family has correct gradients on both axes") {
    Tensor a = fixtures::param(3, 4, 21);
    Tensor w = fixtures::param(3, 4, 22);
    auto f = [&] {
        Tensor x = nn::mul(nn::softmax(a), w) + nn::mul(nn::log_softmax(a, nn::Axis::Rows), w);
        return nn::sum(x) + nn::logsumexp(a);
    };
    CHECK(check(f, {a}) < 1e-6);
}

TEST_CASE("layer norm, row normalization and cosine similarity have correct gradients") {
    Tensor a = fixtures::param(3, 6, 31);
    Tensor gain = fixtures::param(1, 6, 32);
    Tensor bias = fixtures::param(1, 6, 33);
    Tensor u = fixtures::param(1, 6, 34);
    Tensor w = fixtures::param(3, 6, 35);
    auto f = [&] {
        Tensor x = nn::layer_norm(a, gain, bias);
        Tensor y = nn::normalize_rows(a);
        return nn::sum(nn::mul(x, w)) + nn::sum(nn::mul(y, w)) + nn::cosine_sim(u, nn::slice_rows(a, 1, 1));
    };
    CHECK(check(f, {a, gain, bias, u}) < 1e-6);
}

TEST_CASE("structural ops route gradients to the right rows") {
    Tensor table = fixtures::param(5, 3, 41);
    Tensor other = fixtures::param(2, 3, 42);
    Tensor w = fixtures::param(6, 2, 43);
    const std::vector<std::size_t> ids = {4, 0, 4, 2};
    auto f = [&] {
        Tensor g = nn::gather_rows(table, ids);
        Tensor x = nn::concat_rows({g, other});
        Tensor y = nn::concat_cols({nn::slice_cols(x, 0, 1), nn::slice_cols(x, 2, 1)});
        return nn::sum(nn::mul(y, w)) + nn::sum(nn::mean_rows(x)) + nn::mean(x) + nn::select(x, 1, 2);
    };
    CHECK(check(f, {table, other}) < 1e-6);
}

TEST_CASE("scalar-tensor ops have correct gradients") {
    Tensor a = fixtures::param(2, 3, 51);
    Tensor s(Matrix::Constant(1, 1, 0.7), true);
    auto f = [&] { return nn::sum(nn::mul(nn::div_scalar(a, s), nn::mul_scalar(a, s))); };
    CHECK(check(f, {a, s}) < 1e-6);
}

TEST_CASE("repeated backward through a shared graph accumulates once per call") {
    Tensor a(Matrix::Constant(1, 1, 2.0), true);
    Tensor shared = nn::mul(a, a);  // d/da = 2a = 4
    Tensor l1 = nn::scale(shared, 3.0);
    Tensor l2 = nn::scale(shared, 5.0);
    l1.backward();
    CHECK(a.grad()(0, 0) == doctest::Approx(12.0));
    l2.backward();
    CHECK(a.grad()(0, 0) == doctest::Approx(32.0));
}

TEST_CASE("no-grad guard produces constants") {
    Tensor a = fixtures::param(2, 2, 61);
    {
        nn::NoGradGuard guard;
        CHECK_FALSE(nn::grad_enabled());
        CHECK_FALSE(nn::matmul(a, a).requires_grad());
    }
    CHECK(nn::grad_enabled());
    CHECK(nn::matmul(a, a).requires_grad());
    CHECK_FALSE(nn::detach(nn::matmul(a, a)).requires_grad());
}

TEST_CASE("degenerate inputs are rejected") {
    Tensor zero(Matrix::Zero(2, 3), false);
    CHECK_THROWS_AS((void)nn::normalize_rows(zero), Error);
    CHECK_THROWS_AS((void)nn::cosine_sim(nn::slice_rows(zero, 0, 1), fixtures::param(1, 3, 1)), Error);
    CHECK_THROWS_AS((void)nn::softmax(Tensor(Matrix(2, 0), false)), Error);
    CHECK_THROWS_AS((void)nn::matmul(fixtures::param(2, 3, 1), fixtures::param(2, 3, 2)), Error);
    CHECK_THROWS_AS(fixtures::param(2, 3, 1).backward(), Error);
}

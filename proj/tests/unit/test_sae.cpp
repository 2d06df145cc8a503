#include "doctest.h"
#include "oracles.hpp"

#include "latentforge/rng.hpp"
#include "latentforge/sae.hpp"

#include <filesystem>

using namespace latentforge;
using namespace latentforge::sae;

namespace {

Matrix gaussian(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

SaeParams random_params(int d, int s, int k, int k_aux, Rng& rng) {
  SaeParams p;
  p.w_enc = gaussian(s, d, rng) / std::sqrt(static_cast<double>(d));
  p.w_dec = gaussian(d, s, rng);
  p.b_pre = gaussian(1, d, rng) * 0.1;
  p.k = k;
  p.k_aux = k_aux;
  p.alpha = 1.0 / 32.0;
  return p;
}

}  // namespace

TEST_CASE("TopK matches the sort oracle, ties included") {
  auto rng = make_rng(4);
  std::uniform_int_distribution<int> coarse(-3, 3);
  for (int t = 0; t < 200; ++t) {
    Matrix pre = gaussian(5, 17, rng);
    if (t % 2) pre = pre.unaryExpr([&](double) { return static_cast<double>(coarse(rng)); });
    const int k = 1 + t % 17;
    const IndexMatrix idx = topk_indices(pre, k);
    const Matrix z = topk_rows(pre, k);
    for (int r = 0; r < pre.rows(); ++r) {
      const auto expect = oracles::topk_by_sort(oracles::row_of(pre, r), k);
      for (int j = 0; j < k; ++j) CHECK(idx(r, j) == expect[j]);
      Matrix row = Matrix::Zero(1, pre.cols());
      for (int j : expect) row(0, j) = pre(r, j);
      CHECK(z.row(r) == row);
    }
  }
}

TEST_CASE("losses match the element-wise forward oracle") {
  auto rng = make_rng(5);
  for (int t = 0; t < 20; ++t) {
    auto p = random_params(6, 12, 3, 4, rng);
    Matrix x = gaussian(7, 6, rng);
    std::vector<bool> dead(12, false);
    for (int j = 0; j < 12; j += 1 + t % 3) dead[j] = t % 2;
    const auto ev = loss_and_gradients(x, p, dead);
    const auto ref = oracles::sae_forward(x, p, dead);
    CHECK(ev.losses.mse == doctest::Approx(ref.mse).epsilon(1e-12));
    CHECK(ev.losses.aux == doctest::Approx(ref.aux).epsilon(1e-12));
    CHECK(ev.losses.total == doctest::Approx(ref.total).epsilon(1e-12));
    CHECK(ev.active.main == ref.main);
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  auto rng = make_rng(6);
  int checked = 0;
  for (int t = 0; checked < 10; ++t) {
    auto p = random_params(5, 10, 3, 3, rng);
    Matrix x = gaussian(4, 5, rng);
    std::vector<bool> dead(10, false);
    if (t % 2)
      for (int j = 0; j < 10; j += 2) dead[j] = true;
    if (oracles::topk_margin(x, p, dead) < 1e-3) continue;
    ++checked;
    const auto ev = loss_and_gradients(x, p, dead);
    const double eps = 1e-5;
    auto numeric = [&](auto&& slot) {
      const double keep = slot;
      slot = keep + eps;
      const double up = oracles::sae_forward(x, p, dead).total;
      slot = keep - eps;
      const double down = oracles::sae_forward(x, p, dead).total;
      slot = keep;
      return (up - down) / (2 * eps);
    };
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); };
    for (int i = 0; i < p.w_enc.rows(); ++i)
      for (int j = 0; j < p.w_enc.cols(); ++j) CHECK(rel(ev.grads.w_enc(i, j), numeric(p.w_enc(i, j))) < 1e-5);
    for (int i = 0; i < p.w_dec.rows(); ++i)
      for (int j = 0; j < p.w_dec.cols(); ++j) CHECK(rel(ev.grads.w_dec(i, j), numeric(p.w_dec(i, j))) < 1e-5);
    for (int j = 0; j < p.b_pre.size(); ++j) CHECK(rel(ev.grads.b_pre(j), numeric(p.b_pre(j))) < 1e-5);
  }
}

TEST_CASE("library grad check reports small errors") {
  auto rng = make_rng(7);
  auto p = random_params(4, 8, 2, 2, rng);
  Matrix x = gaussian(3, 4, rng);
  auto r = grad_check(p, x, 1e-5);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("training keeps decoder columns at unit norm and lowers the loss") {
  auto rng = make_rng(8);
  Matrix basis = gaussian(3, 10, rng);
  Matrix rows = gaussian(600, 3, rng) * basis;
  SaeConfig cfg;
  cfg.d_sae = 16;
  cfg.k = 3;
  cfg.k_aux = 4;
  cfg.lr = 1e-2;
  cfg.epochs = 30;
  cfg.batch = 64;
  const double before = reconstruction_mse(rows, init_params(rows, cfg));
  auto st = train_sae(rows, cfg);
  for (int j = 0; j < st.params.d_sae(); ++j) CHECK(st.params.w_dec.col(j).norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(reconstruction_mse(rows, st.params) < 0.1 * before);
  CHECK(st.trace.size() == 30);

  auto again = train_sae(rows, cfg);
  CHECK(again.params.w_enc == st.params.w_enc);
}

TEST_CASE("encode produces at most k nonzeros per row") {
  auto rng = make_rng(9);
  auto p = random_params(6, 20, 4, 4, rng);
  Matrix z = encode(gaussian(50, 6, rng), p);
  for (int r = 0; r < z.rows(); ++r) CHECK((z.row(r).array() != 0.0).count() <= 4);
}

TEST_CASE("checkpoint round trip") {
  auto rng = make_rng(10);
  auto p = random_params(6, 20, 4, 5, rng);
  SaeConfig cfg;
  cfg.d_sae = 20;
  cfg.k = 4;
  cfg.k_aux = 5;
  const auto path = std::filesystem::temp_directory_path() / "latentforge_sae_test.ckpt";
  write_checkpoint(to_checkpoint(p, cfg, 17), path);
  auto back = params_from_checkpoint(read_checkpoint(path));
  std::filesystem::remove(path);
  CHECK(back.k == 4);
  CHECK(back.k_aux == 5);
  CHECK((back.w_enc - p.w_enc).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.w_dec - p.w_dec).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("parameter validation") {
  auto rng = make_rng(11);
  auto p = random_params(6, 8, 9, 2, rng);
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.k = 2;
  p.k_aux = 9;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.k_aux = 2;
  CHECK_NOTHROW(p.validate());
  CHECK_THROWS_AS(encode(Matrix::Zero(2, 5), p), DataError);
}

TEST_CASE("epoch schedule shrinks with the pool size") {
  CHECK(epochs_for_msa_size(100) >= epochs_for_msa_size(10000));
  CHECK(epochs_for_msa_size(1) >= 1);
}

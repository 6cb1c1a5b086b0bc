#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ganevent/core/gradcheck.hpp"
#include "ganevent/data/synth.hpp"
#include "ganevent/gan/io.hpp"
#include "ganevent/gan/losses.hpp"
#include "ganevent/gan/train.hpp"

using namespace ganevent;
using namespace ganevent::gan;
using nn::Distance;
using nn::Tensor;

namespace {

const EncoderConfig kTiny{.hidden = 8, .ff_width = 16, .layers = 2, .heads = 4};
// Small enough for exhaustive finite differences (under 200 parameters).
const EncoderConfig kGradcheck{.hidden = 4, .ff_width = 4, .layers = 1, .heads = 2};

Tensor random_events(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t = Tensor::zeros(n, d);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor y = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y.at(i, j) = x.at(perm[i], j);
  return y;
}

Tensor run_generator(const Generator& g, const Tensor& events) {
  nn::Tape tape;
  return g.forward(tape, tape.constant(events)).value();
}

double hausdorff_value(const Tensor& a, const Tensor& b, Distance kind) {
  nn::Tape tape;
  return hausdorff_loss(tape.constant(a), tape.constant(b), kind).item();
}

double elementwise_value(const Tensor& a, const Tensor& b) {
  nn::Tape tape;
  std::vector<std::size_t> all(a.rows());
  std::iota(all.begin(), all.end(), 0);
  return reconstruction_loss_elementwise(tape.constant(a), tape.constant(b), all).item();
}

// Direct evaluation of the averaged Hausdorff formula with explicit loops.
double brute_force_hausdorff(const Tensor& a, const Tensor& b, Distance kind) {
  const std::size_t m = a.rows(), d = a.cols();
  auto dist = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
    double s = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double u = x.at(i, c), v = y.at(j, c);
      if (kind == Distance::l1) s += std::abs(u - v);
      if (kind == Distance::l2) s += (u - v) * (u - v);
      xx += u * u;
      yy += v * v;
      xy += u * v;
    }
    return kind == Distance::cosine ? 1.0 - xy / std::sqrt(xx * yy) : s;
  };
  double forward = 0.0, backward = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double best_f = INFINITY, best_b = INFINITY;
    for (std::size_t j = 0; j < m; ++j) {
      best_f = std::min(best_f, dist(a, i, b, j));
      best_b = std::min(best_b, dist(b, i, a, j));
    }
    forward += best_f;
    backward += best_b;
  }
  return 0.5 * (forward / m + backward / m);
}

template <class F>
void for_each_permutation(std::size_t n, F&& f) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do f(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<DaySample> synthetic_days(std::uint64_t seed, std::size_t n_days, std::size_t dim) {
  auto corpus = data::synth_corpus({.seed = seed, .min_events_per_day = 2, .max_events_per_day = 4,
                                    .n_days = n_days, .dimension = dim});
  return day_samples(corpus.calendar, 0);
}

}  // namespace

TEST_CASE("mask_events", "[gan][mask]") {
  Rng rng(1);
  Tensor v = random_events(4, 3, rng);
  Tensor mask_vector = Tensor::row({9.0, 9.0, 9.0});

  SECTION("n = 4, k = 0.25 masks exactly one event and leaves the rest bit-identical") {
    auto m = mask_events(v, mask_vector, 0.25, rng);
    REQUIRE(m.masked.size() == 1);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == m.masked[0]) CHECK(m.events.at(i, j) == 9.0);
        else CHECK(m.events.at(i, j) == v.at(i, j));
      }
  }
  SECTION("a single event is always masked") {
    Tensor one = random_events(1, 3, rng);
    for (double k : {0.01, 0.25, 0.9}) CHECK(mask_events(one, mask_vector, k, rng).masked == std::vector<std::size_t>{0});
  }
  SECTION("a fixed seed reproduces the masked indices") {
    Tensor many = random_events(20, 3, rng);
    Rng a(42), b(42);
    CHECK(mask_events(many, mask_vector, 0.25, a).masked == mask_events(many, mask_vector, 0.25, b).masked);
  }
  SECTION("mask count is max(1, round(k n)) over distinct indices") {
    CHECK(mask_count(1, 0.25) == 1);
    CHECK(mask_count(3, 0.25) == 1);
    CHECK(mask_count(6, 0.25) == 2);
    CHECK(mask_count(10, 0.25) == 3);
    CHECK(mask_count(18, 0.25) == 5);
    for (std::size_t n = 1; n < 40; ++n) {
      auto idx = choose_masked(n, 0.3, rng);
      CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
      CHECK(idx.size() == mask_count(n, 0.3));
      CHECK(idx.back() < n);
    }
    CHECK_THROWS_AS(mask_count(4, 0.0), ContractError);
    CHECK_THROWS_AS(mask_count(4, 1.0), ContractError);
  }
}

TEST_CASE("generator shape and numerics", "[gan][generator]") {
  Rng rng(3);
  Generator g(5, kTiny, rng);
  for (std::size_t n : {1u, 2u, 7u, 30u}) {
    Tensor out = run_generator(g, random_events(n, 5, rng));
    CHECK(out.rows() == n);
    CHECK(out.cols() == 5);
    CHECK(out.all_finite());
  }
  CHECK_THROWS_AS(run_generator(g, random_events(3, 4, rng)), DimensionError);
}

TEST_CASE("generator is permutation-equivariant, exhaustively for n <= 6", "[gan][generator][set]") {
  Rng rng(5);
  Generator g(4, kTiny, rng);
  for (std::size_t n = 1; n <= 6; ++n) {
    Tensor v = random_events(n, 4, rng);
    Tensor base = run_generator(g, v);
    double worst = 0.0;
    for_each_permutation(n, [&](const std::vector<std::size_t>& perm) {
      worst = std::max(worst, max_abs_diff(run_generator(g, permute_rows(v, perm)), permute_rows(base, perm)));
    });
    INFO("n = " << n);
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("discriminator is permutation-invariant and maps into (0, 1)", "[gan][discriminator][set]") {
  Rng rng(6);
  Discriminator dsc(4, kTiny, rng);
  for (std::size_t n = 1; n <= 6; ++n) {
    Tensor v = random_events(n, 4, rng);
    const double base = dsc.probability(v);
    CHECK(base > 0.0);
    CHECK(base < 1.0);
    double worst = 0.0;
    for_each_permutation(n, [&](const std::vector<std::size_t>& perm) {
      worst = std::max(worst, std::abs(dsc.probability(permute_rows(v, perm)) - base));
    });
    INFO("n = " << n);
    CHECK(worst <= 1e-9);
  }
  // Duplicating every event keeps the output a probability.
  Tensor v = random_events(3, 4, rng);
  Tensor doubled = Tensor::zeros(6, 4);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) doubled.at(i, j) = v.at(i % 3, j);
  const double p = dsc.probability(doubled);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("elementwise reconstruction loss examples", "[gan][loss]") {
  Tensor a = Tensor::matrix({{1.0, 2.0}, {3.0, -1.0}});
  CHECK(elementwise_value(a, a) == Catch::Approx(0.0).margin(1e-15));
  CHECK(elementwise_value(Tensor::matrix({{1.0, 0.0}}), Tensor::matrix({{0.0, 1.0}})) == Catch::Approx(1.0));
  // cosines 1 and 0.5 (60 degrees apart)
  Tensor targets = Tensor::matrix({{1.0, 0.0}, {1.0, 0.0}});
  Tensor outputs = Tensor::matrix({{2.0, 0.0}, {0.5, std::sqrt(3.0) / 2.0}});
  CHECK(elementwise_value(targets, outputs) == Catch::Approx(0.5).epsilon(1e-12));
  nn::Tape tape;
  CHECK_THROWS_AS(reconstruction_loss_elementwise(tape.constant(a), tape.constant(a), {}), ContractError);
}

TEST_CASE("Hausdorff loss examples", "[gan][loss][hausdorff]") {
  SECTION("the swap example: elementwise 2, Hausdorff 0") {
    Tensor targets = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}});
    Tensor outputs = Tensor::matrix({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(hausdorff_value(targets, outputs, Distance::cosine) == 0.0);
    CHECK(elementwise_value(targets, outputs) == 2.0);
  }
  SECTION("a permutation of the targets scores 0 under every distance") {
    Rng rng(8);
    Tensor t = random_events(5, 4, rng);
    Tensor o = permute_rows(t, {3, 0, 4, 1, 2});
    for (Distance kind : {Distance::cosine, Distance::l1, Distance::l2})
      CHECK(hausdorff_value(t, o, kind) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("size mismatch is a contract error") {
    nn::Tape tape;
    CHECK_THROWS_AS(hausdorff_loss(tape.constant(Tensor::zeros(2, 3)), tape.constant(Tensor::zeros(3, 3)), Distance::l2),
                    ContractError);
  }
}

TEST_CASE("Hausdorff loss matches the brute-force formula and is permutation-invariant", "[gan][loss][hausdorff][oracle]") {
  Rng rng(10);
  for (std::size_t m = 1; m <= 5; ++m)
    for (int trial = 0; trial < 4; ++trial) {
      Tensor t = random_events(m, 3, rng);
      Tensor o = random_events(m, 3, rng);
      for (Distance kind : {Distance::cosine, Distance::l1, Distance::l2}) {
        const double value = hausdorff_value(t, o, kind);
        INFO("m = " << m << " distance " << nn::to_string(kind));
        CHECK(std::abs(value - brute_force_hausdorff(t, o, kind)) < 1e-12);
        CHECK(std::abs(value - hausdorff_value(o, t, kind)) < 1e-12);
        CHECK(hausdorff_value(t, t, kind) == Catch::Approx(0.0).margin(1e-15));
        double worst = 0.0;
        for_each_permutation(m, [&](const std::vector<std::size_t>& perm) {
          worst = std::max(worst, std::abs(hausdorff_value(permute_rows(t, perm), o, kind) - value));
          worst = std::max(worst, std::abs(hausdorff_value(t, permute_rows(o, perm), kind) - value));
        });
        CHECK(worst < 1e-12);
      }
    }
}

TEST_CASE("cosine Hausdorff loss is bounded by the mean elementwise loss", "[gan][loss][property]") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(6);
    Tensor t = random_events(m, 4, rng);
    Tensor o = random_events(m, 4, rng);
    CHECK(hausdorff_value(t, o, Distance::cosine) <= elementwise_value(t, o) / static_cast<double>(m) + 1e-12);
  }
}

TEST_CASE("adversarial loss examples", "[gan][loss][adversarial]") {
  nn::Tape tape;
  auto at_half = adversarial_losses_from_logits(tape.constant(Tensor::scalar(0.0)), tape.constant(Tensor::scalar(0.0)));
  CHECK(at_half.d_loss.item() == Catch::Approx(-2.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(at_half.d_loss.item() == Catch::Approx(1.3863).epsilon(1e-4));
  CHECK(at_half.g_loss.item() == Catch::Approx(0.6931).epsilon(1e-4));

  auto optimum = adversarial_losses_from_logits(tape.constant(Tensor::scalar(40.0)), tape.constant(Tensor::scalar(-40.0)));
  CHECK(optimum.d_loss.item() < 1e-15);

  auto saturating =
      adversarial_losses_from_logits(tape.constant(Tensor::scalar(0.0)), tape.constant(Tensor::scalar(0.0)), true);
  CHECK(saturating.g_loss.item() == Catch::Approx(std::log(0.5)));

  // A discriminator whose last layer is zeroed outputs exactly 0.5.
  Rng rng(2);
  Discriminator dsc(3, kTiny, rng);
  dsc.fc3.weight.value.fill(0.0);
  dsc.fc3.bias.value.fill(0.0);
  Tensor v = random_events(4, 3, rng);
  CHECK(dsc.probability(v) == 0.5);
  auto losses = adversarial_losses(dsc, tape.constant(v), tape.constant(v));
  CHECK(losses.d_loss.item() == Catch::Approx(1.3862943611198906));
  CHECK(losses.g_loss.item() == Catch::Approx(0.6931471805599453));
}

TEST_CASE("generated day replaces only the masked rows", "[gan][loss]") {
  nn::Tape tape;
  Tensor v = Tensor::matrix({{1, 1}, {2, 2}, {3, 3}});
  Tensor r = Tensor::matrix({{7, 7}, {8, 8}, {9, 9}});
  auto out = generated_day(tape.constant(v), tape.constant(r), {0, 2}).value();
  CHECK(out == Tensor::matrix({{7, 7}, {2, 2}, {9, 9}}));
}

TEST_CASE("every loss passes finite-difference checks over 50 seeds", "[gan][gradcheck]") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(derive_seed(seed, "gan.gradcheck"));
    const std::size_t d = 3;
    Generator g(d, kGradcheck, rng);
    Discriminator dsc(d, kGradcheck, rng);
    auto g_params = g.parameters();
    auto d_params = dsc.parameters();
    REQUIRE(nn::parameter_count(g_params) <= 200);
    REQUIRE(nn::parameter_count(d_params) <= 200);
    Tensor v = random_events(5, d, rng);
    const std::vector<std::size_t> masked{1, 3};

    auto check = [&](const std::string& name, const std::function<nn::Var(nn::Tape&)>& loss,
                     const nn::ParameterRefs& params) {
      auto r = nn::finite_diff_check(loss, params);
      INFO(name << " seed " << seed << " worst " << r.worst_parameter << "[" << r.worst_index << "] analytic "
                << r.analytic << " numeric " << r.numeric);
      CHECK(r.max_relative_error < 1e-4);
    };

    check("elementwise", [&](nn::Tape& t) {
      return reconstruction_loss_elementwise(t.constant(v), g.reconstruct(t, v, masked), masked);
    }, g_params);
    for (Distance kind : {Distance::cosine, Distance::l1, Distance::l2})
      check(std::string("hausdorff ") + std::string(nn::to_string(kind)), [&](nn::Tape& t) {
        return masked_reconstruction_loss(t.constant(v), g.reconstruct(t, v, masked), masked, true, kind);
      }, g_params);
    check("d_loss", [&](nn::Tape& t) {
      Var real = t.constant(v);
      Var fake = generated_day(real, detach(g.reconstruct(t, v, masked)), masked);
      return adversarial_losses(dsc, real, fake).d_loss;
    }, d_params);
    check("g_loss", [&](nn::Tape& t) {
      Var real = t.constant(v);
      Var fake = generated_day(real, g.reconstruct(t, v, masked), masked);
      return adversarial_losses(dsc, real, fake).g_loss;
    }, g_params);
  }
}

TEST_CASE("train_gan", "[gan][train]") {
  const auto days = synthetic_days(4, 30, 4);
  GanConfig cfg{.encoder = kTiny, .epochs = 2, .batch_size = 4, .learning_rate = 1e-3, .seed = 9};

  SECTION("fixed seed gives identical parameters and logs") {
    GanTrainer a(4, cfg), b(4, cfg);
    a.train(days);
    b.train(days);
    CHECK(nn::snapshot(a.generator().parameters()) == nn::snapshot(b.generator().parameters()));
    CHECK(nn::snapshot(a.discriminator().parameters()) == nn::snapshot(b.discriminator().parameters()));
    CHECK(a.log().size() == 2);
    CHECK(a.log()[1].d_loss == b.log()[1].d_loss);
    CHECK(a.log()[1].rec_loss.has_value());
  }
  SECTION("lambda_d = 0 leaves the discriminator untouched") {
    cfg.lambda_d = 0.0;
    GanTrainer t(4, cfg);
    const auto before = nn::snapshot(t.discriminator().parameters());
    const auto g_before = nn::snapshot(t.generator().parameters());
    t.train(days);
    CHECK(nn::snapshot(t.discriminator().parameters()) == before);
    CHECK(nn::snapshot(t.generator().parameters()) != g_before);
    CHECK_FALSE(t.log().back().d_loss.has_value());
    CHECK(t.discriminator_optimizer().steps() == 0);
  }
  SECTION("lambda_r = 0 never computes the reconstruction loss") {
    cfg.lambda_r = 0.0;
    GanTrainer t(4, cfg);
    t.train(days);
    CHECK_FALSE(t.log().back().rec_loss.has_value());
    CHECK(t.log().back().g_loss.has_value());
  }
  SECTION("invalid configurations are rejected") {
    cfg.lambda_r = 0.0;
    cfg.lambda_d = 0.0;
    CHECK_THROWS_AS(GanTrainer(4, cfg), ContractError);
    cfg = GanConfig{.encoder = kTiny, .mask_fraction = 1.0};
    CHECK_THROWS_AS(GanTrainer(4, cfg), ContractError);
    cfg = GanConfig{.encoder = {.hidden = 6, .heads = 4}};
    CHECK_THROWS_AS(GanTrainer(4, cfg), ContractError);
  }
  SECTION("days with fewer than two events cannot train") {
    std::vector<DaySample> singles{{data::Date::from_ymd(2020, 1, 1), Tensor::zeros(1, 4)}};
    GanTrainer t(4, cfg);
    CHECK_THROWS_AS(t.run_epoch(singles), ContractError);
  }
  SECTION("resuming from a saved state continues like an uninterrupted run") {
    GanTrainer full(4, cfg);
    full.train(days);

    cfg.epochs = 1;
    GanTrainer first(4, cfg);
    first.train(days);
    const auto dir = std::filesystem::temp_directory_path() / "ganevent_gan_resume";
    std::filesystem::remove_all(dir);
    save_gan(dir, first);
    auto resumed = load_gan(dir, 2);
    resumed->train(days);
    std::filesystem::remove_all(dir);

    CHECK(resumed->log().size() == 2);
    CHECK(resumed->log()[1].d_loss == full.log()[1].d_loss);
    CHECK(resumed->log()[1].rec_loss == full.log()[1].rec_loss);
    CHECK(nn::snapshot(resumed->generator().parameters()) == nn::snapshot(full.generator().parameters()));
  }
}

TEST_CASE("training improves masked reconstruction on held-out days", "[gan][train][slow]") {
  auto corpus = data::synth_corpus({.seed = 21, .n_clusters = 3, .min_events_per_day = 3, .max_events_per_day = 6,
                                    .n_days = 120, .dimension = 8});
  auto days = day_samples(corpus.calendar, 0);
  std::vector<DaySample> train(days.begin(), days.begin() + 90), held(days.begin() + 90, days.end());
  GanConfig cfg{.encoder = {.hidden = 8, .ff_width = 16, .layers = 1, .heads = 2},
                .epochs = 15, .batch_size = 8, .learning_rate = 3e-3, .seed = 2};
  GanTrainer t(8, cfg);
  const double before = masked_reconstruction_similarity(t.generator(), held, 0.25, 1);
  t.train(train);
  const double after = masked_reconstruction_similarity(t.generator(), held, 0.25, 1);
  INFO("before " << before << " after " << after);
  CHECK(after - before >= 0.2);
}

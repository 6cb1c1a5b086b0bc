#pragma once

// On-disk layout of a GAN run directory:
//   generator.ckpt, discriminator.ckpt   parameter checkpoints
//   optimizer.ckpt                       AdamW moments of both networks
//   gan.json                             config, progress and loss log
//   gan_losses.csv                       one row per epoch

#include <filesystem>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "ganevent/core/checkpoint.hpp"
#include "ganevent/data/csv.hpp"
#include "ganevent/gan/train.hpp"

namespace ganevent::gan {

inline nlohmann::json to_json(const GanConfig& c) {
  return {{"dim_hidden", c.encoder.hidden},
          {"ff_width", c.encoder.ff_width},
          {"layers", c.encoder.layers},
          {"heads", c.encoder.heads},
          {"mask_fraction", c.mask_fraction},
          {"lambda_r", c.lambda_r},
          {"lambda_d", c.lambda_d},
          {"distance", std::string(nn::to_string(c.distance))},
          {"use_hausdorff", c.use_hausdorff},
          {"saturating_g_loss", c.saturating_g_loss},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"lag", c.lag},
          {"seed", c.seed}};
}

inline GanConfig gan_config_from_json(const nlohmann::json& j) {
  GanConfig c;
  c.encoder.hidden = j.at("dim_hidden").get<std::size_t>();
  c.encoder.ff_width = j.at("ff_width").get<std::size_t>();
  c.encoder.layers = j.at("layers").get<std::size_t>();
  c.encoder.heads = j.at("heads").get<std::size_t>();
  c.mask_fraction = j.at("mask_fraction").get<double>();
  c.lambda_r = j.at("lambda_r").get<double>();
  c.lambda_d = j.at("lambda_d").get<double>();
  c.distance = nn::distance_from_string(j.at("distance").get<std::string>());
  c.use_hausdorff = j.at("use_hausdorff").get<bool>();
  c.saturating_g_loss = j.at("saturating_g_loss").get<bool>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.lag = j.at("lag").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline std::vector<nn::NamedTensor> moments(const std::string& prefix, const nn::ParameterRefs& params,
                                            const nn::AdamW& opt) {
  std::vector<nn::NamedTensor> out;
  if (opt.first_moments().empty()) return out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + ".m." + params[i]->name, opt.first_moments()[i]});
    out.push_back({prefix + ".v." + params[i]->name, opt.second_moments()[i]});
  }
  return out;
}

inline void restore_moments(const std::string& prefix, const nn::ParameterRefs& params, nn::AdamW& opt,
                            const std::map<std::string, nn::Tensor>& by_name, std::int64_t steps) {
  opt.set_steps(steps);
  if (steps == 0) return;
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (const nn::Parameter* p : params) {
    auto m = by_name.find(prefix + ".m." + p->name);
    auto v = by_name.find(prefix + ".v." + p->name);
    if (m == by_name.end() || v == by_name.end()) throw IoError("optimizer checkpoint lacks moments for " + p->name);
    if (!m->second.same_shape(p->value) || !v->second.same_shape(p->value))
      throw IoError("optimizer moment shape mismatch for " + p->name);
    opt.first_moments().push_back(m->second);
    opt.second_moments().push_back(v->second);
  }
}

}  // namespace detail

inline std::string format_gan_log(const std::vector<GanEpochLog>& log) {
  std::ostringstream out;
  out << "epoch,d_loss,g_loss,rec_loss,days\n";
  auto cell = [](const std::optional<double>& v) { return v ? data::format_double(*v) : std::string(); };
  for (const auto& e : log)
    out << e.epoch << ',' << cell(e.d_loss) << ',' << cell(e.g_loss) << ',' << cell(e.rec_loss) << ',' << e.days << '\n';
  return out.str();
}

/// Writes the full trainer state into `dir`. Every file is written atomically.
inline void save_gan(const std::filesystem::path& dir, GanTrainer& trainer, const nlohmann::json& extra = {}) {
  std::filesystem::create_directories(dir);
  auto g_params = trainer.generator().parameters();
  auto d_params = trainer.discriminator().parameters();
  nn::save_checkpoint(dir / "generator.ckpt", nn::snapshot(g_params));
  nn::save_checkpoint(dir / "discriminator.ckpt", nn::snapshot(d_params));
  auto moments = detail::moments("generator", g_params, trainer.generator_optimizer());
  auto d_moments = detail::moments("discriminator", d_params, trainer.discriminator_optimizer());
  moments.insert(moments.end(), d_moments.begin(), d_moments.end());
  nn::save_checkpoint(dir / "optimizer.ckpt", moments);

  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : trainer.log())
    log.push_back({{"epoch", e.epoch},
                   {"d_loss", detail::optional_json(e.d_loss)},
                   {"g_loss", detail::optional_json(e.g_loss)},
                   {"rec_loss", detail::optional_json(e.rec_loss)},
                   {"days", e.days}});
  nlohmann::json sidecar = {{"config", to_json(trainer.config())},
                            {"dim", trainer.generator().dim()},
                            {"epochs_done", trainer.epochs_done()},
                            {"generator_steps", trainer.generator_optimizer().steps()},
                            {"discriminator_steps", trainer.discriminator_optimizer().steps()},
                            {"log", log}};
  if (!trainer.log().empty()) {
    sidecar["final"] = log.back();
  }
  if (!extra.is_null()) sidecar["extra"] = extra;
  nn::write_file_atomic(dir / "gan_losses.csv", format_gan_log(trainer.log()));
  nn::write_file_atomic(dir / "gan.json", sidecar.dump(2) + "\n");
}

inline nlohmann::json read_gan_sidecar(const std::filesystem::path& dir) {
  const auto path = dir / "gan.json";
  if (!std::filesystem::exists(path)) throw IoError("missing " + path.string() + " (produced by train-gan)");
  try {
    return nlohmann::json::parse(nn::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Restores a trainer saved by save_gan. `epochs` overrides the configured
/// total so a finished run can be extended.
inline std::unique_ptr<GanTrainer> load_gan(const std::filesystem::path& dir, std::optional<std::size_t> epochs = {}) {
  const auto sidecar = read_gan_sidecar(dir);
  GanConfig cfg = gan_config_from_json(sidecar.at("config"));
  if (epochs) cfg.epochs = *epochs;
  auto trainer = std::make_unique<GanTrainer>(sidecar.at("dim").get<std::size_t>(), cfg);
  auto g_params = trainer->generator().parameters();
  auto d_params = trainer->discriminator().parameters();
  nn::restore(g_params, nn::load_checkpoint(dir / "generator.ckpt"));
  nn::restore(d_params, nn::load_checkpoint(dir / "discriminator.ckpt"));
  std::map<std::string, nn::Tensor> by_name;
  for (auto& t : nn::load_checkpoint(dir / "optimizer.ckpt")) by_name.emplace(t.name, std::move(t.value));
  detail::restore_moments("generator", g_params, trainer->generator_optimizer(), by_name,
                          sidecar.at("generator_steps").get<std::int64_t>());
  detail::restore_moments("discriminator", d_params, trainer->discriminator_optimizer(), by_name,
                          sidecar.at("discriminator_steps").get<std::int64_t>());
  trainer->set_epochs_done(sidecar.at("epochs_done").get<std::size_t>());
  for (const auto& e : sidecar.at("log"))
    trainer->log().push_back({e.at("epoch").get<std::size_t>(), detail::optional_from(e.at("d_loss")),
                              detail::optional_from(e.at("g_loss")), detail::optional_from(e.at("rec_loss")),
                              e.at("days").get<std::size_t>()});
  return trainer;
}

/// Loads only the generator, for embedding days.
inline Generator load_generator(const std::filesystem::path& dir) {
  const auto sidecar = read_gan_sidecar(dir);
  const GanConfig cfg = gan_config_from_json(sidecar.at("config"));
  Rng rng(0);
  Generator g(sidecar.at("dim").get<std::size_t>(), cfg.encoder, rng);
  auto params = g.parameters();
  nn::restore(params, nn::load_checkpoint(dir / "generator.ckpt"));
  return g;
}

}  // namespace ganevent::gan

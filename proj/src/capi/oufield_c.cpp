#include "oufield/oufield.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "oufield/error.hpp"
#include "oufield/ou_dist.hpp"
#include "oufield/pipeline.hpp"
#include "oufield/service.hpp"
#include "oufield/sulfate_model.hpp"

struct oufield_run {
  std::optional<oufield::RunConfig> config;
  oufield::RunOptions options;
};

struct oufield_model {
  std::unique_ptr<oufield::SulfateModel> model;
};

namespace {

thread_local std::string g_last_error;

oufield_status status_of(oufield::ErrorKind kind) {
  using oufield::ErrorKind;
  switch (kind) {
    case ErrorKind::Config: return OUFIELD_ERR_CONFIG;
    case ErrorKind::Data:
    case ErrorKind::Io: return OUFIELD_ERR_DATA;
    case ErrorKind::Domain: return OUFIELD_ERR_DOMAIN;
    case ErrorKind::Stability: return OUFIELD_ERR_STABILITY;
    case ErrorKind::Numerical:
    case ErrorKind::Diagnostics: return OUFIELD_ERR_NUMERICAL;
    case ErrorKind::Unsupported: return OUFIELD_ERR_UNSUPPORTED;
    case ErrorKind::Sampler: return OUFIELD_ERR_SAMPLER;
  }
  return OUFIELD_ERR_UNKNOWN;
}

oufield_status fail(oufield_status s, std::string message) {
  g_last_error = std::move(message);
  return s;
}

template <typename F>
oufield_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return OUFIELD_OK;
  } catch (const oufield::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(OUFIELD_ERR_UNKNOWN, "out of memory");
  } catch (const std::exception& e) {
    return fail(OUFIELD_ERR_UNKNOWN, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void hand_out(const std::string& text, char** report) {
  if (report) *report = dup_string(text);
}

oufield::Theta to_theta(const oufield_theta& t) {
  oufield::Theta out;
  out.gamma = t.gamma;
  out.alpha = t.alpha;
  out.eta = t.eta;
  out.beta = t.beta;
  out.sigma2 = t.sigma2;
  out.delta = t.delta;
  out.T = t.T;
  return out;
}

template <typename F>
oufield_status with_config(oufield_run* run, char** report, F&& f) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (report) *report = nullptr;
  if (!run->config) return fail(OUFIELD_ERR_USAGE, "this command requires --config");
  return guarded([&] { hand_out(f(*run->config, run->options), report); });
}

oufield_status copy_out(const Eigen::VectorXd& v, double* out, size_t n) {
  if (!out) return fail(OUFIELD_ERR_USAGE, "null output buffer");
  if (n != static_cast<size_t>(v.size())) {
    return fail(OUFIELD_ERR_USAGE, "output buffer length " + std::to_string(n) + " != field size " +
                                       std::to_string(v.size()));
  }
  std::memcpy(out, v.data(), n * sizeof(double));
  return OUFIELD_OK;
}

}  // namespace

extern "C" {

const char* oufield_last_error(void) { return g_last_error.c_str(); }

const char* oufield_status_name(oufield_status status) {
  switch (status) {
    case OUFIELD_OK: return "ok";
    case OUFIELD_ERR_USAGE: return "usage";
    case OUFIELD_ERR_CONFIG: return "config";
    case OUFIELD_ERR_DATA: return "data";
    case OUFIELD_ERR_DOMAIN: return "domain";
    case OUFIELD_ERR_STABILITY: return "stability";
    case OUFIELD_ERR_NUMERICAL: return "numerical";
    case OUFIELD_ERR_UNSUPPORTED: return "unsupported";
    case OUFIELD_ERR_SAMPLER: return "sampler";
    case OUFIELD_ERR_INVALID_HANDLE: return "invalid_handle";
    case OUFIELD_ERR_UNKNOWN: return "unknown";
  }
  return "unknown";
}

void oufield_string_free(char* s) { std::free(s); }

oufield_status oufield_run_open(const char* config_path, oufield_run** out) {
  if (!out) return fail(OUFIELD_ERR_USAGE, "null output handle");
  *out = nullptr;
  return guarded([&] {
    auto run = std::make_unique<oufield_run>();
    if (config_path) run->config = oufield::load_run_config(config_path);
    *out = run.release();
  });
}

oufield_status oufield_run_set_seed(oufield_run* run, uint64_t seed) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  run->options.seed = seed;
  return OUFIELD_OK;
}

oufield_status oufield_run_set_threads(oufield_run* run, int threads) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (threads < 1) return fail(OUFIELD_ERR_USAGE, "threads must be >= 1");
  run->options.threads = threads;
  return OUFIELD_OK;
}

oufield_status oufield_run_set_out_dir(oufield_run* run, const char* dir) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (!dir) return fail(OUFIELD_ERR_USAGE, "null output directory");
  run->options.out_dir = dir;
  return OUFIELD_OK;
}

oufield_status oufield_run_set_bundle(oufield_run* run, const char* bundle_path) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (bundle_path) {
    run->options.bundle = std::filesystem::path(bundle_path);
  } else {
    run->options.bundle.reset();
  }
  return OUFIELD_OK;
}

oufield_status oufield_run_check(oufield_run* run, char** report) {
  return with_config(run, report, oufield::run_check);
}

oufield_status oufield_run_fit(oufield_run* run, char** report) {
  return with_config(run, report, oufield::run_fit);
}

oufield_status oufield_run_forecast(oufield_run* run, char** report) {
  return with_config(run, report, oufield::run_forecast);
}

oufield_status oufield_run_simulate(oufield_run* run, char** report) {
  return with_config(run, report, oufield::run_simulate);
}

oufield_status oufield_run_validate(oufield_run* run, char** report) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (report) *report = nullptr;
  return guarded([&] { hand_out(oufield::run_validate(run->config, run->options), report); });
}

oufield_status oufield_run_serve(oufield_run* run, const char* host, int port) {
  if (!run) return fail(OUFIELD_ERR_INVALID_HANDLE, "null run handle");
  if (port < 0 || port > 65535) return fail(OUFIELD_ERR_USAGE, "port out of range");
  return guarded([&] {
    const std::filesystem::path path = run->options.bundle ? *run->options.bundle
                                                           : run->options.out_dir / "bundle.json";
    std::shared_ptr<const oufield::ModelBundle> bundle;
    if (std::filesystem::is_regular_file(path)) {
      bundle = std::make_shared<const oufield::ModelBundle>(oufield::ModelBundle::load(path));
    }
    oufield::serve(bundle, host ? host : "127.0.0.1", port, run->options.threads);
  });
}

void oufield_run_close(oufield_run* run) { delete run; }

oufield_status oufield_model_create(int nx, int ny, double dx, double dy, double wind_u, double wind_v,
                                    const double* emissions, const oufield_theta* theta,
                                    oufield_model** out) {
  if (!out) return fail(OUFIELD_ERR_USAGE, "null output handle");
  *out = nullptr;
  if (!emissions || !theta) return fail(OUFIELD_ERR_USAGE, "null emissions or theta");
  return guarded([&] {
    const oufield::Grid grid = oufield::Grid::build(nx, ny, {}, dx, dy);
    auto parts = std::make_shared<oufield::TransportComponents>(
        oufield::assemble_components(grid, oufield::FaceWind::uniform(grid, wind_u, wind_v)));
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(emissions, grid.size());
    auto handle = std::make_unique<oufield_model>();
    handle->model = std::make_unique<oufield::SulfateModel>(parts, x, to_theta(*theta));
    *out = handle.release();
  });
}

oufield_status oufield_model_set_theta(oufield_model* model, const oufield_theta* theta) {
  if (!model) return fail(OUFIELD_ERR_INVALID_HANDLE, "null model handle");
  if (!theta) return fail(OUFIELD_ERR_USAGE, "null theta");
  return guarded([&] { model->model->set_theta(to_theta(*theta)); });
}

size_t oufield_model_size(const oufield_model* model) { return model ? model->model->n() : 0; }

oufield_status oufield_model_so2(const oufield_model* model, double* out, size_t n) {
  if (!model) return fail(OUFIELD_ERR_INVALID_HANDLE, "null model handle");
  oufield_status s = OUFIELD_OK;
  const oufield_status g = guarded([&] { s = copy_out(model->model->so2_steady_state(), out, n); });
  return g != OUFIELD_OK ? g : s;
}

oufield_status oufield_model_so4_mean(const oufield_model* model, double* out, size_t n) {
  if (!model) return fail(OUFIELD_ERR_INVALID_HANDLE, "null model handle");
  oufield_status s = OUFIELD_OK;
  const oufield_status g = guarded([&] { s = copy_out(model->model->so4_mean(), out, n); });
  return g != OUFIELD_OK ? g : s;
}

oufield_status oufield_model_log_likelihood(const oufield_model* model, const double* observed,
                                            const unsigned char* mask, size_t n, double* out) {
  if (!model) return fail(OUFIELD_ERR_INVALID_HANDLE, "null model handle");
  if (!observed || !out) return fail(OUFIELD_ERR_USAGE, "null observed or output pointer");
  if (n != model->model->n()) return fail(OUFIELD_ERR_USAGE, "observed length does not match the grid");
  return guarded([&] {
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(observed, static_cast<Eigen::Index>(n));
    oufield::Mask m;
    if (mask) m.assign(mask, mask + n);
    *out = model->model->log_likelihood(v, m);
  });
}

oufield_status oufield_model_sample_field(const oufield_model* model, uint64_t seed, double* out, size_t n) {
  if (!model) return fail(OUFIELD_ERR_INVALID_HANDLE, "null model handle");
  oufield_status s = OUFIELD_OK;
  const oufield_status g = guarded([&] {
    oufield::Rng rng = oufield::make_rng(seed);
    s = copy_out(model->model->sample_field(rng), out, n);
  });
  return g != OUFIELD_OK ? g : s;
}

void oufield_model_destroy(oufield_model* model) { delete model; }

oufield_status oufield_phi_error_bound(double delta, double horizon, double* out) {
  if (!out) return fail(OUFIELD_ERR_USAGE, "null output pointer");
  return guarded([&] { *out = oufield::phi_error_bound(delta, horizon); });
}

}  // extern "C"

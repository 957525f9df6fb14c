// Command-line front end; talks to the engine only through the C API.
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "oufield/oufield.h"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int exit_code(oufield_status s) {
  switch (s) {
    case OUFIELD_OK: return kOk;
    case OUFIELD_ERR_USAGE:
    case OUFIELD_ERR_INVALID_HANDLE: return kUsage;
    case OUFIELD_ERR_CONFIG:
    case OUFIELD_ERR_DATA:
    case OUFIELD_ERR_DOMAIN:
    case OUFIELD_ERR_UNSUPPORTED: return kData;
    default: return kNumerical;
  }
}

int report_failure(const char* what, oufield_status s) {
  std::fprintf(stderr, "oufield %s: %s error: %s\n", what, oufield_status_name(s), oufield_last_error());
  return exit_code(s);
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
  std::optional<std::string> bundle;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int resolve_threads(const Options& o) {
  if (o.threads) return *o.threads;
  if (const char* env = std::getenv("OUFIELD_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::fprintf(stderr, "oufield: ignoring invalid OUFIELD_THREADS='%s'\n", env);
  }
  return 1;
}

using RunFn = oufield_status (*)(oufield_run*, char**);

int execute(const std::string& name, const Options& o, RunFn fn, bool config_required) {
  if (config_required && o.config.empty()) {
    std::fprintf(stderr, "oufield %s: --config is required\n", name.c_str());
    return kUsage;
  }
  oufield_run* run = nullptr;
  oufield_status s = oufield_run_open(o.config.empty() ? nullptr : o.config.c_str(), &run);
  if (s != OUFIELD_OK) return report_failure(name.c_str(), s);
  s = oufield_run_set_out_dir(run, o.out.c_str());
  if (s == OUFIELD_OK) s = oufield_run_set_threads(run, resolve_threads(o));
  if (s == OUFIELD_OK && o.seed) s = oufield_run_set_seed(run, *o.seed);
  if (s == OUFIELD_OK && o.bundle) s = oufield_run_set_bundle(run, o.bundle->c_str());
  if (s == OUFIELD_OK) {
    if (fn) {
      char* text = nullptr;
      s = fn(run, &text);
      if (text) {
        std::fputs(text, stdout);
        oufield_string_free(text);
      }
    } else {
      std::fprintf(stderr, "oufield serve: listening on %s:%d\n", o.host.c_str(), o.port);
      s = oufield_run_serve(run, o.host.c_str(), o.port);
    }
  }
  const int code = s == OUFIELD_OK ? kOk : report_failure(name.c_str(), s);
  oufield_run_close(run);
  return code;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "Run configuration (JSON)");
  sub->add_option("--seed", o.seed, "Override the config seed");
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
  sub->add_option("--threads", o.threads, "Worker threads (falls back to OUFIELD_THREADS)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--bundle", o.bundle, "Model bundle (default <out>/bundle.json)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ornstein-Uhlenbeck field models for sulfate transport", "oufield"};
  app.require_subcommand(1);
  Options o;

  struct Command {
    const char* name;
    const char* help;
    RunFn fn;
    bool needs_config;
  };
  const Command commands[] = {
      {"check", "Assemble operators and print structural diagnostics", oufield_run_check, true},
      {"fit", "Run MCMC and write traces, summary and bundle", oufield_run_fit, true},
      {"forecast", "Forecast exposure reduction for the configured scenario", oufield_run_forecast, true},
      {"simulate", "Euler-Maruyama runs of the coupled model", oufield_run_simulate, true},
      {"validate", "Run the oracle and invariant suite", oufield_run_validate, false},
      {"serve", "Serve the HTTP API from a bundle", nullptr, false},
  };
  const Command* selected = nullptr;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    if (c.fn == nullptr) {
      sub->add_option("--host", o.host, "Bind address")->capture_default_str();
      sub->add_option("--port", o.port, "Port")->capture_default_str()->check(CLI::Range(0, 65535));
    }
    sub->callback([&selected, &c] { selected = &c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (!selected) return kUsage;
  return execute(selected->name, o, selected->fn, selected->needs_config);
}

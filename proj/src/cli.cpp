#include "traitgeo/cli.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "traitgeo/conditioning.hpp"
#include "traitgeo/contrast.hpp"
#include "traitgeo/diagnostics.hpp"
#include "traitgeo/directions.hpp"
#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"
#include "traitgeo/judge_client.hpp"
#include "traitgeo/kernels.hpp"
#include "traitgeo/steersim.hpp"

namespace traitgeo::cli {

namespace {

// Raised for flag combinations that are individually valid but inconsistent.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// --config FILE: expand the JSON object into flag tokens placed ahead of the
// explicit ones; with take-last option policy explicit flags win.
std::vector<std::string> expand_config(std::span<const std::string> args) {
  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return rest;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(fmt::format("config {}: {}", config_path, e.what()));
  }
  if (!doc.is_object()) throw UsageError("config file must hold a JSON object");

  std::vector<std::string> injected;
  for (const auto& [raw_key, value] : doc.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    if (!key.starts_with("--")) key = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(key);
    } else if (value.is_array()) {
      std::vector<std::string> parts;
      for (const auto& v : value) parts.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      injected.push_back(key);
      injected.push_back(fmt::format("{}", fmt::join(parts, ",")));
    } else if (value.is_string()) {
      injected.push_back(key);
      injected.push_back(value.get<std::string>());
    } else {
      injected.push_back(key);
      injected.push_back(value.dump());
    }
  }
  // Subcommand name stays first.
  std::vector<std::string> out;
  if (!rest.empty()) out.push_back(rest.front());
  out.insert(out.end(), injected.begin(), injected.end());
  if (!rest.empty()) out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

DirectionFormat format_or_throw(const std::string& text, const char* flag) {
  auto f = parse_direction_format(text);
  if (!f) throw UsageError(fmt::format("{} must be json or raw, got '{}'", flag, text));
  return *f;
}

std::vector<std::size_t> parse_order(const std::string& text, std::span<const std::string> names) {
  std::vector<std::size_t> order;
  for (const auto& item : split_list(text)) {
    auto idx = find_trait(names, item);
    if (!idx) throw UsageError("--order names unknown trait '" + item + "'");
    order.push_back(*idx);
  }
  return order;
}

ConditioningSpec spec_for(Scheme scheme, const RunConfig& rc, std::span<const std::string> names) {
  ConditioningSpec spec{scheme};
  switch (scheme) {
    case Scheme::C1:
      spec.gamma = rc.gamma;
      break;
    case Scheme::C4:
      spec.beta = rc.beta.value_or(kDefaultBeta);
      [[fallthrough]];
    case Scheme::C3:
      spec.tau = rc.tau.value_or(kDefaultTau);
      [[fallthrough]];
    case Scheme::C2:
      if (!rc.order.empty()) spec.order = parse_order(rc.order, names);
      break;
    default:
      break;
  }
  return spec;
}

void check_scheme_flags(Scheme scheme, const RunConfig& rc) {
  const auto name = scheme_name(scheme);
  if (scheme == Scheme::C1 && !rc.gamma) throw UsageError("scheme C1 requires --gamma");
  if (scheme != Scheme::C1 && rc.gamma) throw UsageError(fmt::format("--gamma does not apply to {}", name));
  if (scheme != Scheme::C3 && scheme != Scheme::C4 && rc.tau) {
    throw UsageError(fmt::format("--tau does not apply to {}", name));
  }
  if (scheme != Scheme::C4 && rc.beta) throw UsageError(fmt::format("--beta does not apply to {}", name));
  if ((scheme == Scheme::C0 || scheme == Scheme::C1 || scheme == Scheme::C5) && !rc.order.empty()) {
    throw UsageError(fmt::format("--order does not apply to {}", name));
  }
}

Scheme scheme_or_throw(const std::string& text) {
  auto s = parse_scheme(text);
  if (!s) throw UsageError("unknown scheme '" + text + "' (expected c0..c5)");
  return *s;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

std::vector<std::string> trait_list(const RunConfig& rc) {
  if (rc.traits.empty()) return canonical_trait_names();
  return split_list(rc.traits);
}

ReportFormat report_or_throw(const std::string& text) {
  auto f = parse_report_format(text);
  if (!f) throw UsageError("--report-format must be csv or table1");
  return *f;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_condition(const RunConfig& rc, std::ostream& out) {
  require(rc.in_path, "--in");
  require(rc.out_path, "--out");
  require(rc.scheme, "--scheme");
  const Scheme scheme = scheme_or_throw(rc.scheme);
  check_scheme_flags(scheme, rc);
  const DirectionFormat in_fmt = format_or_throw(rc.in_format, "--format");
  const DirectionFormat out_fmt =
      rc.out_format.empty() ? in_fmt : format_or_throw(rc.out_format, "--out-format");

  const DirectionSet original = normalize_rows(load_direction_set(rc.in_path, in_fmt));
  const ConditioningSpec spec = spec_for(scheme, rc, original.trait_names());
  const ConditionedSet conditioned = apply_condition(original, spec);
  const GeometryDiagnostics diag = diagnose(original, conditioned);

  save_direction_set(conditioned.directions, rc.out_path, out_fmt);
  const std::string diag_path =
      rc.diagnostics_path.empty() ? rc.out_path + ".diagnostics.csv" : rc.diagnostics_path;
  write_file_atomic(diag_path, diagnostics_csv(std::span(&diag, 1)));

  out << fmt::format("scheme={} params={} max_offdiag_abs_cos={:.3e} retention=[{:.6g}, {:.6g}]\n",
                     scheme_name(scheme), spec.params_string(), diag.max_offdiag_abs_cos,
                     diag.retention_min, diag.retention_max);
  return kOk;
}

int cmd_diagnose(const RunConfig& rc, std::ostream& out) {
  require(rc.in_path, "--in");
  const auto names = split_list(rc.schemes);
  if (names.empty()) throw UsageError("--schemes needs at least one scheme");
  std::vector<Scheme> schemes;
  for (const auto& n : names) schemes.push_back(scheme_or_throw(n));
  const bool wants_c1 = std::find(schemes.begin(), schemes.end(), Scheme::C1) != schemes.end();
  if (wants_c1 && !rc.gamma) throw UsageError("scheme C1 requires --gamma");

  const DirectionSet original =
      normalize_rows(load_direction_set(rc.in_path, format_or_throw(rc.in_format, "--format")));
  std::vector<ConditionedSet> conditioned;
  for (Scheme s : schemes) conditioned.push_back(apply_condition(original, spec_for(s, rc, original.trait_names())));
  const auto rows = diagnostics_report(original, conditioned);
  const std::string csv = diagnostics_csv(rows);
  if (rc.out_path.empty()) {
    out << csv;
  } else {
    write_file_atomic(rc.out_path, csv);
  }
  return kOk;
}

int cmd_contrast(const RunConfig& rc, std::ostream& out) {
  require(rc.records_path, "--records");
  const ReportFormat report = report_or_throw(rc.report_format);
  const auto traits = trait_list(rc);
  const auto records = parse_score_records(read_file(rc.records_path), traits);

  // Pick the (condition, model_tag) group; ambiguous input needs a filter.
  std::map<std::pair<std::string, std::string>, std::size_t> groups;
  for (const auto& r : records) {
    if ((!rc.condition.empty() && r.condition != rc.condition) ||
        (!rc.model_tag.empty() && r.model_tag != rc.model_tag)) {
      continue;
    }
    ++groups[{r.condition, r.model_tag}];
  }
  if (groups.empty()) throw UsageError("no records match the requested condition/model tag");
  if (groups.size() > 1) {
    std::vector<std::string> labels;
    for (const auto& [k, n] : groups) labels.push_back(k.first + "/" + k.second);
    throw UsageError(fmt::format("records hold several condition/model groups ({}); pass --condition and --model-tag",
                                 fmt::join(labels, ", ")));
  }
  const auto [condition, model_tag] = groups.begin()->first;

  // Fluency first: a request for it must fail before anything is written.
  std::optional<std::vector<FluencyCell>> fluency;
  if (rc.fluency) fluency = fluency_profile(records, condition);

  const ContrastMatrix matrix = contrast_matrix(records, condition, model_tag, traits);
  const TraitContrastSummary summary = extract_T_Bmax(matrix);
  const std::string summary_text = summary_csv(summary, report);

  if (!rc.matrix_out.empty()) write_file_atomic(rc.matrix_out, contrast_csv(matrix));
  if (!rc.variance_out.empty()) write_file_atomic(rc.variance_out, contrast_variance_csv(matrix));
  if (!rc.summary_out.empty()) write_file_atomic(rc.summary_out, summary_text);
  if (fluency) {
    const std::string text = fluency_csv(*fluency, traits);
    if (!rc.fluency_out.empty()) {
      write_file_atomic(rc.fluency_out, text);
    } else {
      out << text;
    }
  }
  if (rc.summary_out.empty()) out << summary_text;
  return kOk;
}

int cmd_simulate(const RunConfig& rc, std::ostream& out) {
  require(rc.world_path, "--world");
  require(rc.out_dir, "--out-dir");
  if (!rc.seed) throw UsageError("--seed is required for simulate");
  const Scheme scheme = scheme_or_throw(rc.scheme.empty() ? "c0" : rc.scheme);
  check_scheme_flags(scheme, rc);
  if (!(rc.intensity >= 0.0)) throw UsageError("--intensity must be >= 0");
  const ReportFormat report = report_or_throw(rc.report_format);

  sim::WorldConfig cfg = sim::load_world_config(rc.world_path);
  cfg.seed = *rc.seed;
  const sim::SyntheticWorld world = sim::make_world(cfg);
  const auto estimate = sim::estimate_directions_diff_means(world, world.config().n_per_level);
  const ConditionedSet conditioned =
      apply_condition(estimate.directions, spec_for(scheme, rc, estimate.directions.trait_names()));
  const ContrastMatrix matrix = sim::simulate_bleed(world, conditioned, rc.intensity);
  const TraitContrastSummary summary = extract_T_Bmax(matrix);
  const GeometryDiagnostics diag = diagnose(estimate.directions, conditioned);

  std::error_code ec;
  std::filesystem::create_directories(rc.out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + rc.out_dir + ": " + ec.message());
  const std::filesystem::path dir(rc.out_dir);
  write_file_atomic(dir / "contrast.csv", contrast_csv(matrix));
  write_file_atomic(dir / "summary.csv", summary_csv(summary, report));
  write_file_atomic(dir / "diagnostics.csv", diagnostics_csv(std::span(&diag, 1)));
  save_direction_set(conditioned.directions, dir / "directions.json", DirectionFormat::Json);

  double bmax = 0.0;
  for (const auto& r : summary.rows) bmax = std::max(bmax, std::abs(r.B_max));
  out << fmt::format("scheme={} seed={} intensity={:g} max_offdiag_abs_cos={:.3e} max|B_max|={:.4f}\n",
                     scheme_name(scheme), *rc.seed, rc.intensity, diag.max_offdiag_abs_cos, bmax);
  out << summary_csv(summary, report);
  return kOk;
}

struct GenerationRow {
  std::string generation_id, text, condition, model_tag, polarity;
  std::string target_trait;
  std::vector<std::string> measured;
  std::optional<double> fluency;
};

std::vector<GenerationRow> read_generations(const std::string& path, std::span<const std::string> traits) {
  std::vector<GenerationRow> rows;
  const auto lines = nonempty_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      GenerationRow g;
      g.generation_id = j.value("generation_id", fmt::format("g{}", i));
      g.text = j.at("text").get<std::string>();
      g.condition = j.value("condition", "");
      g.model_tag = j.value("model_tag", "");
      g.polarity = j.value("polarity", "base");
      g.target_trait = j.at("target_trait").get<std::string>();
      g.measured = j.contains("measured_traits") ? j.at("measured_traits").get<std::vector<std::string>>()
                                                 : std::vector<std::string>(traits.begin(), traits.end());
      if (j.contains("fluency") && !j.at("fluency").is_null()) g.fluency = j.at("fluency").get<double>();
      rows.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, fmt::format("{} line {}: {}", path, i + 1, e.what()));
    }
  }
  return rows;
}

int cmd_judge(const RunConfig& rc, std::ostream& out) {
  require(rc.in_path, "--in");
  require(rc.rubrics_path, "--rubrics");
  require(rc.out_path, "--out");
  if (rc.mock == !rc.endpoint.empty()) throw UsageError("pass exactly one of --mock or --endpoint");

  judge::JudgeConfig jc;
  jc.endpoint = rc.endpoint;
  jc.model = rc.model;
  jc.timeout_seconds = rc.timeout;
  jc.max_retries = rc.retries;
  jc.max_concurrency = rc.concurrency;
  if (!rc.verdict_log.empty()) jc.verdict_log = rc.verdict_log;
  jc = judge::JudgeConfig::with_environment_key(jc);
  try {
    jc.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const auto traits = trait_list(rc);
  const auto book = judge::RubricBook::load(rc.rubrics_path);
  const auto gens = read_generations(rc.in_path, traits);

  struct Job {
    std::size_t gen;
    std::size_t measured;
  };
  std::vector<Job> jobs;
  std::vector<JudgeScoreRecord> records;
  for (std::size_t g = 0; g < gens.size(); ++g) {
    auto target = find_trait(traits, gens[g].target_trait);
    auto pol = parse_polarity(gens[g].polarity);
    if (!target) throw UsageError("unknown target trait '" + gens[g].target_trait + "'");
    if (!pol) throw UsageError("unknown polarity '" + gens[g].polarity + "'");
    for (const auto& m : gens[g].measured) {
      auto measured = find_trait(traits, m);
      if (!measured) throw UsageError("unknown measured trait '" + m + "'");
      (void)book.for_trait(traits[*measured]);
      jobs.push_back({g, *measured});
      records.push_back({gens[g].condition, gens[g].model_tag, *target, *pol, *measured, 0.0,
                         gens[g].fluency, gens[g].generation_id});
    }
  }

  if (rc.mock) {
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      const auto& trait = traits[jobs[k].measured];
      records[k].score = judge::mock_judge(gens[jobs[k].gen].text, trait, book.for_trait(trait));
    }
  } else {
    judge::JudgeClient client(jc);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (std::size_t k = next++; k < jobs.size(); k = next++) {
        try {
          const auto& trait = traits[jobs[k].measured];
          records[k].score = client.score_generation(gens[jobs[k].gen].text, trait, book.for_trait(trait));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = jobs.size();
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(rc.concurrency), jobs.size());
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  write_file_atomic(rc.out_path, score_records_csv(records, traits));
  out << fmt::format("judged {} generations into {} records\n", gens.size(), records.size());
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficient:
    case ErrorKind::NotSymmetric:
    case ErrorKind::ZeroVector:
      return kNumerical;
    case ErrorKind::JudgeUnavailable:
    case ErrorKind::UnparseableVerdict:
      return kExternal;
    default:
      return kUsage;
  }
}

void add_direction_flags(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--in", rc.in_path, "Direction-set file");
  sub->add_option("--format", rc.in_format, "Input format: json or raw");
  sub->add_option("--gamma", rc.gamma, "C1 shrinkage parameter in [0,1]");
  sub->add_option("--tau", rc.tau, "C3/C4 cosine threshold (default 0.5)");
  sub->add_option("--beta", rc.beta, "C4 projection fraction (default 0.5)");
  sub->add_option("--order", rc.order, "C2-C4 processing order, e.g. O,C,E,A,N");
}

}  // namespace

int run(std::span<const std::string> args_in, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Conditioning, diagnostics and contrast analysis for trait steering directions"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("traitgeo 0.1.0 (kernels: ") +
                                        std::string(kernels::isa_name(kernels::active().isa)) + ")");

  auto* condition = app.add_subcommand("condition", "Apply a conditioning scheme to a direction set");
  add_direction_flags(condition, rc);
  condition->add_option("--scheme", rc.scheme, "c0..c5");
  condition->add_option("--out", rc.out_path, "Output direction-set file");
  condition->add_option("--out-format", rc.out_format, "Output format (default: input format)");
  condition->add_option("--diagnostics", rc.diagnostics_path, "Diagnostics CSV (default: <out>.diagnostics.csv)");

  auto* diagnose_cmd = app.add_subcommand("diagnose", "Geometry diagnostics for a list of schemes");
  add_direction_flags(diagnose_cmd, rc);
  diagnose_cmd->add_option("--schemes", rc.schemes, "Comma list, e.g. c0,c1,c5");
  diagnose_cmd->add_option("--out", rc.out_path, "CSV output (default: stdout)");

  auto* contrast = app.add_subcommand("contrast", "High-Low contrast matrix, T/B_max and fluency from judge records");
  contrast->add_option("--records", rc.records_path, "Judge-score records CSV");
  contrast->add_option("--condition", rc.condition, "Condition to analyse");
  contrast->add_option("--model-tag", rc.model_tag, "Model tag to analyse");
  contrast->add_option("--matrix-out", rc.matrix_out, "Contrast matrix CSV");
  contrast->add_option("--summary-out", rc.summary_out, "Summary CSV (default: stdout)");
  contrast->add_option("--variance-out", rc.variance_out, "Per-cell variance CSV");
  contrast->add_flag("--fluency", rc.fluency, "Also emit the fluency profile");
  contrast->add_option("--fluency-out", rc.fluency_out, "Fluency CSV (default: stdout)");
  contrast->add_option("--traits", rc.traits, "Comma list of trait names (default: OCEAN)");
  contrast->add_option("--report-format", rc.report_format, "csv or table1");

  auto* simulate = app.add_subcommand("simulate", "Run the synthetic extract-condition-steer-measure pipeline");
  simulate->add_option("--world", rc.world_path, "World config JSON");
  simulate->add_option("--seed", rc.seed, "Seed for every random stream (required)");
  simulate->add_option("--scheme", rc.scheme, "c0..c5 (default c0)");
  simulate->add_option("--gamma", rc.gamma, "C1 shrinkage parameter");
  simulate->add_option("--tau", rc.tau, "C3/C4 threshold");
  simulate->add_option("--beta", rc.beta, "C4 projection fraction");
  simulate->add_option("--order", rc.order, "C2-C4 order");
  simulate->add_option("--intensity", rc.intensity, "Steering intensity (default 1.0)");
  simulate->add_option("--out-dir", rc.out_dir, "Output directory");
  simulate->add_option("--report-format", rc.report_format, "csv or table1");

  auto* judge_cmd = app.add_subcommand("judge", "Score generations (JSON lines) into a records CSV");
  judge_cmd->add_option("--in", rc.in_path, "Generations JSONL");
  judge_cmd->add_option("--rubrics", rc.rubrics_path, "Rubric JSON file");
  judge_cmd->add_option("--out", rc.out_path, "Records CSV output");
  judge_cmd->add_flag("--mock", rc.mock, "Use the offline keyword judge");
  judge_cmd->add_option("--endpoint", rc.endpoint, "Chat-completions URL");
  judge_cmd->add_option("--model", rc.model, "Judge model name");
  judge_cmd->add_option("--timeout", rc.timeout, "Per-request timeout in seconds");
  judge_cmd->add_option("--retries", rc.retries, "Retries on transient failure");
  judge_cmd->add_option("--concurrency", rc.concurrency, "Maximum in-flight requests");
  judge_cmd->add_option("--verdict-log", rc.verdict_log, "Append verdicts as JSON lines");
  judge_cmd->add_option("--traits", rc.traits, "Comma list of trait names (default: OCEAN)");

  try {
    std::vector<std::string> args = expand_config(args_in);
    // CLI11 consumes arguments back to front.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }

  try {
    if (condition->parsed()) return cmd_condition(rc, out);
    if (diagnose_cmd->parsed()) return cmd_diagnose(rc, out);
    if (contrast->parsed()) return cmd_contrast(rc, out);
    if (simulate->parsed()) return cmd_simulate(rc, out);
    if (judge_cmd->parsed()) return cmd_judge(rc, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace traitgeo::cli

// blsh: binary codes from bilinear random projections.
//
//   blsh gt       --dataset F                        ground-truth neighbor sets
//   blsh encode   --dataset F --k K --m M --method   hasher + code table
//   blsh eval-pr  --dataset F --k L --m L            precision-recall curves
//   blsh verify   [--dataset F | --dw --dv]          kernel and bound checks
//   blsh bench    --dw --dv --k L --m L              encode time and memory
//
// Exit codes: 0 ok, 1 usage, 2 io, 3 shape, 4 numeric, 5 verification failed.

#include <CLI11.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "blsh/blsh.hpp"

namespace fs = std::filesystem;
using namespace blsh;

namespace {

constexpr int kVerifyFailed = 5;

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) fail(ErrorKind::usage, "--dataset is required");
  std::string format = cfg.format;
  if (format == "auto") {
    std::ifstream in(cfg.dataset, std::ios::binary);
    if (!in) fail(ErrorKind::io, cfg.dataset + ": cannot open");
    unsigned char head[4] = {0, 0, 0, 0};
    in.read(reinterpret_cast<char*>(head), 4);
    format = (head[0] == 0 && head[1] == 0 && head[2] == 8 && head[3] == 3) ? "idx" : "matrix";
  }
  Dataset ds;
  if (format == "idx") {
    ds = load_idx(cfg.dataset);
    if ((cfg.dw && cfg.dw != ds.rows()) || (cfg.dv && cfg.dv != ds.cols())) {
      fail(ErrorKind::shape, cfg.dataset + ": images are " + std::to_string(ds.rows()) + "x" +
                                 std::to_string(ds.cols()) + ", not " + std::to_string(cfg.dw) + "x" +
                                 std::to_string(cfg.dv));
    }
  } else {
    if (cfg.dw <= 0 || cfg.dv <= 0) fail(ErrorKind::usage, "--dw and --dv are required for csv/blsh input");
    ds = load_matrix_file(cfg.dataset, cfg.dw, cfg.dv);
  }
  if (ds.empty()) fail(ErrorKind::io, cfg.dataset + ": no items");
  if (cfg.limit > 0 && cfg.limit < ds.size()) ds.items.resize(cfg.limit);
  return ds;
}

std::pair<GroundTruth, Dataset> ground_truth(const RunConfig& cfg, const Dataset& ds) {
  RandomStream rs(cfg.seed, stream_ids::kQueries);
  const uint32_t nq = std::min<uint32_t>(cfg.queries, static_cast<uint32_t>(ds.size()));
  return build_ground_truth(ds, nq, cfg.kth, cfg.max_neighbors, rs, cfg.threads);
}

/// Applies --scale (auto resolves to `fallback`) and then --bandwidth.
Dataset prepare(const RunConfig& cfg, Dataset ds, const std::string& fallback) {
  const std::string mode = cfg.scale == "auto" ? fallback : cfg.scale;
  if (mode == "threshold") {
    ds = ground_truth(cfg, ds).second;
  } else if (mode == "frobenius") {
    ds = rescale_frobenius(ds, cfg.frobenius_target);
  }
  if (cfg.bandwidth != 1.0) ds = scale(ds, cfg.bandwidth);
  return ds;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, cfg.out + ": cannot create output directory (" + ec.message() + ")");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { detail::write_file(path.string(), text); }

Hasher make_hasher(const std::string& method, RandomStream& rs, const Dataset& ds, uint32_t k, uint32_t m) {
  if (method == "bilinear") return build_bilinear(rs, ds.rows(), ds.cols(), k, m);
  return build_single(rs, ds.rows() * ds.cols(), k, method == "angle" ? SingleVariant::angle : SingleVariant::sik);
}

uint64_t parameter_bytes(const std::string& method, const Dataset& ds, uint32_t k, uint32_t m) {
  const auto d = static_cast<uint64_t>(ds.rows() * ds.cols());
  return method == "bilinear" ? bilinear_parameter_bytes(ds.rows(), ds.cols(), k, m) : single_parameter_bytes(d, k);
}

// ---------------------------------------------------------------------------

int cmd_gt(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg);
  const auto [gt, scaled] = ground_truth(cfg, ds);
  std::ostringstream os;
  os << kGtSchema << '\n' << "query,neighbor_count,excluded,neighbors\n";
  for (size_t i = 0; i < gt.query_ids.size(); ++i) {
    os << gt.query_ids[i] << ',' << gt.neighbor_sets[i].size() << ",0,";
    for (size_t j = 0; j < gt.neighbor_sets[i].size(); ++j) os << (j ? " " : "") << gt.neighbor_sets[i][j];
    os << '\n';
  }
  for (uint32_t q : gt.excluded_queries) os << q << ",,1,\n";
  const fs::path dir = output_dir(cfg);
  write_text(dir / "gt.csv", os.str());

  size_t total = 0;
  for (const auto& s : gt.neighbor_sets) total += s.size();
  std::cout << "items " << ds.size() << ", queries " << gt.query_ids.size() << " retained, "
            << gt.excluded_queries.size() << " excluded\n"
            << "threshold (mean distance to neighbor " << cfg.kth << ") " << fmt(gt.raw_threshold)
            << ", scale factor " << fmt(gt.scale_factor) << '\n'
            << "mean neighbors per retained query "
            << (gt.query_ids.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(gt.query_ids.size()))
            << '\n'
            << "wrote " << (dir / "gt.csv").string() << '\n';
  return 0;
}

int cmd_encode(const RunConfig& cfg) {
  if (cfg.method == "both") fail(ErrorKind::usage, "encode takes one --method (single, bilinear or angle)");
  if (cfg.k.size() != 1 || cfg.m.size() != 1) fail(ErrorKind::usage, "encode takes a single --k and --m");
  const uint32_t k = cfg.k[0], m = cfg.m[0];
  const Dataset ds = prepare(cfg, load_dataset(cfg), "threshold");
  RandomStream rs(cfg.seed, stream_ids::kHasher);
  const Hasher h = make_hasher(cfg.method, rs, ds, k, m);
  const CodeTable codes = encode_all(h, ds, cfg.threads);

  const fs::path dir = output_dir(cfg);
  save_hasher((dir / "hasher.bin").string(), h);
  save_codes((dir / "codes.bin").string(), codes);

  const uint64_t d = static_cast<uint64_t>(ds.rows() * ds.cols());
  const uint64_t single_bytes = single_parameter_bytes(d, k);
  std::cout << "encoded " << codes.size() << " items of " << ds.rows() << "x" << ds.cols() << " into " << k
            << "-bit codes (" << cfg.method << (cfg.method == "bilinear" ? ", m=" + std::to_string(m) : "")
            << ")\n"
            << "parameter bytes " << parameter_bytes(cfg.method, ds, k, m);
  if (cfg.method == "bilinear") {
    std::cout << " (single projection at the same k: " << single_bytes << ", ratio "
              << fmt(static_cast<double>(parameter_bytes(cfg.method, ds, k, m)) / static_cast<double>(single_bytes))
              << ")";
  }
  std::cout << "\nwrote " << (dir / "hasher.bin").string() << ", " << (dir / "codes.bin").string() << '\n';
  return 0;
}

struct PrJob {
  std::string method;
  uint32_t k;
  uint32_t m;
};

int cmd_eval_pr(const RunConfig& cfg) {
  const Dataset raw = load_dataset(cfg);
  auto [gt, ds] = ground_truth(cfg, raw);
  if (cfg.bandwidth != 1.0) ds = scale(ds, cfg.bandwidth);
  if (gt.query_ids.empty()) {
    fail(ErrorKind::io, "no queries left after excluding those with more than " + std::to_string(cfg.max_neighbors) +
                            " neighbors");
  }
  const PrSweep sweep = cfg.sweep == "radius" ? PrSweep::radius : PrSweep::rank;

  std::vector<PrJob> jobs;
  const std::vector<uint32_t>& k_single = cfg.k_single.empty() ? cfg.k : cfg.k_single;
  for (uint32_t m : cfg.m) {
    if (cfg.method == "single" || cfg.method == "both")
      for (uint32_t k : k_single) jobs.push_back({"single", k, m});
    if (cfg.method == "angle")
      for (uint32_t k : k_single) jobs.push_back({"angle", k, m});
    if (cfg.method == "bilinear" || cfg.method == "both")
      for (uint32_t k : cfg.k) jobs.push_back({"bilinear", k, m});
  }

  std::ostringstream pr, area, corr;
  write_pr_header(pr);
  write_aupr_header(area);
  write_correlation_header(corr);
  bool any_corr = false;

  std::map<std::pair<std::string, uint32_t>, std::vector<PrCurve>> single_cache;  // single ignores m
  for (const auto& job : jobs) {
    std::vector<PrCurve> runs;
    const auto key = std::make_pair(job.method, job.k);
    if (job.method != "bilinear" && single_cache.count(key)) {
      runs = single_cache[key];
    } else {
      for (uint32_t r = 0; r < cfg.repetitions; ++r) {
        RandomStream rs(cfg.seed + r, stream_ids::kHasher);
        const Hasher h = make_hasher(job.method, rs, ds, job.k, job.m);
        const CodeTable codes = encode_all(h, ds, cfg.threads);
        CodeTable qcodes(codes.bits(), gt.query_ids.size());
        for (size_t i = 0; i < gt.query_ids.size(); ++i) qcodes.set(i, codes.code(gt.query_ids[i]));
        runs.push_back(pr_curve(gt, codes, qcodes, sweep));

        if (r == 0 && job.method == "bilinear" && cfg.corr_pairs > 0) {
          RandomStream crs(cfg.seed, stream_ids::kCorrelation);
          write_correlation_rows(corr, job.m, job.k, bit_correlation_matrix(h, ds, cfg.corr_pairs, crs));
          any_corr = true;
        }
      }
      if (job.method != "bilinear") single_cache[key] = runs;
    }
    for (uint32_t r = 0; r < cfg.repetitions; ++r) {
      write_pr_rows(pr, job.method, job.k, job.m, std::to_string(cfg.seed + r), runs[r]);
    }
    const PrCurve agg = aggregate_curves(runs);
    write_pr_rows(pr, job.method, job.k, job.m, "mean", agg);
    write_pr_rows(pr, job.method, job.k, job.m, "std", agg);
    const AreaSummary a = area_summary(runs);
    write_aupr_row(area, job.method, job.k, job.m, runs.size(), a, runs.front());
    std::cout << job.method << " k=" << job.k << " m=" << job.m << "  area under PR " << fmt(a.mean) << " +- "
              << fmt(a.std) << '\n';
    if (runs.front().queries_skipped) {
      std::cerr << "warning: " << runs.front().queries_skipped << " queries have no ground-truth neighbors; skipped\n";
    }
  }

  const fs::path dir = output_dir(cfg);
  write_text(dir / "pr_curve.csv", pr.str());
  write_text(dir / "aupr.csv", area.str());
  if (any_corr) write_text(dir / "correlation.csv", corr.str());
  std::cout << "queries " << gt.query_ids.size() << " retained, " << gt.excluded_queries.size() << " excluded\n"
            << "wrote " << (dir / "pr_curve.csv").string() << '\n';
  return 0;
}

int cmd_verify(const RunConfig& cfg) {
  Dataset ds;
  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  if (cfg.dataset.empty()) {
    const Eigen::Index dw = cfg.dw ? cfg.dw : 25, dv = cfg.dv ? cfg.dv : 25;
    RandomStream gen(cfg.seed, stream_ids::kSynthetic);
    for (uint32_t i = 0; i < std::max(2 * cfg.pairs, cfg.identical_pairs); ++i) {
      Eigen::MatrixXd x(dw, dv);
      for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = gen.uniform01();
      ds.push_back(FeatureMatrix(std::move(x)));
    }
    for (uint32_t i = 0; i < cfg.pairs; ++i) pairs.emplace_back(2 * i, 2 * i + 1);
  } else {
    ds = load_dataset(cfg);
    if (ds.size() < 2) fail(ErrorKind::usage, "verify needs at least two items");
    RandomStream pick(cfg.seed, stream_ids::kVerify);
    for (uint32_t i = 0; i < cfg.pairs; ++i) {
      const auto a = static_cast<uint32_t>(pick.below(ds.size()));
      auto b = static_cast<uint32_t>(pick.below(ds.size() - 1));
      pairs.emplace_back(a, b >= a ? b + 1 : b);
    }
  }
  if (pairs.empty() && cfg.identical_pairs == 0) fail(ErrorKind::usage, "verify: --pairs must be >= 1");
  for (uint32_t i = 0; i < cfg.identical_pairs; ++i) {
    const auto id = static_cast<uint32_t>(i % ds.size());
    pairs.emplace_back(id, id);
  }
  ds = prepare(cfg, std::move(ds), "frobenius");

  std::vector<VerifyRow> rows(pairs.size());
  const RandomStream base(cfg.seed, stream_ids::kVerify + 1);
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto& x = ds.items[pairs[p].first];
    const auto& y = ds.items[pairs[p].second];
    VerifyRow& r = rows[p];
    r.pair = static_cast<uint32_t>(p);
    r.item_x = pairs[p].first;
    r.item_y = pairs[p].second;
    r.hamming = hamming_bound_report(x, y, cfg.tol, cfg.mc_samples >= 2 ? std::optional<int64_t>(cfg.mc_samples)
                                                                          : std::nullopt,
                                     base.substream(2 * p), cfg.threads);
    r.cov = covariance_bounds(x, y);
    if (cfg.cov_samples >= 100) r.cov.mc_estimate = covariance_mc(x, y, cfg.cov_samples, base.substream(2 * p + 1),
                                                                  BitSharing::shared_w, cfg.threads);
    const auto& h = r.hamming;
    const bool gated = h.assumptions.both();
    r.kernel_lower_ok = h.kappa_g_val <= h.kappa_b_val + 1e-12;
    r.kernel_upper_ok = !gated || h.kappa_b_val <= std::pow(h.kappa_g_val, kSandwichExponent) + 1e-12;
    r.hamming_upper_ok = h.upper_holds(1e-10);
    r.hamming_lower_ok = !gated || h.lower_holds(1e-10);
    if (h.mc_estimate) {
      // Null-hypothesis binomial error, so a zero-variance sample is still judged.
      const double p_ref = h.series_value;
      const double se = std::max(h.mc_estimate->std_err,
                                 std::sqrt(p_ref * (1.0 - p_ref) / static_cast<double>(h.mc_estimate->n_samples)));
      r.hamming_mc_ok = std::abs(h.mc_estimate->mean - p_ref) <= 4.0 * se + h.series_tail_bound;
    }
    r.cov_ok = r.cov.envelope_holds(4.0);
  }

  std::ostringstream os;
  write_verify_header(os);
  for (const auto& r : rows) write_verify_row(os, r);
  const fs::path dir = output_dir(cfg);
  write_text(dir / "verify.csv", os.str());

  size_t assumption_pass = 0, failed = 0;
  for (const auto& r : rows) {
    assumption_pass += r.hamming.assumptions.both();
    failed += !r.all_ok();
  }
  std::cout << "pairs " << rows.size() << " (" << ds.rows() << "x" << ds.cols() << "), assumptions hold on "
            << assumption_pass << ", failed checks on " << failed << '\n'
            << "wrote " << (dir / "verify.csv").string() << '\n';
  if (failed) {
    std::ostringstream bad;
    write_verify_header(bad);
    for (const auto& r : rows)
      if (!r.all_ok()) write_verify_row(bad, r);
    std::cerr << "verification failed:\n" << bad.str();
    return kVerifyFailed;
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  Eigen::Index dw = cfg.dw, dv = cfg.dv;
  if (!cfg.dataset.empty() && (dw == 0 || dv == 0)) {
    const Dataset ds = load_dataset(cfg);
    dw = ds.rows();
    dv = ds.cols();
  }
  if (dw == 0) dw = 28;
  if (dv == 0) dv = 28;
  BenchOptions opt;
  opt.memory_cap_bytes = cfg.memory_cap_mb << 20;

  std::vector<std::tuple<Method, uint32_t, uint32_t>> jobs;
  const std::vector<uint32_t>& k_single = cfg.k_single.empty() ? cfg.k : cfg.k_single;
  if (cfg.method == "angle") fail(ErrorKind::usage, "bench compares single and bilinear codes; use --method single");
  if (cfg.method == "single" || cfg.method == "both")
    for (uint32_t k : k_single) jobs.emplace_back(Method::single, k, 1);
  if (cfg.method == "bilinear" || cfg.method == "both")
    for (uint32_t k : cfg.k)
      for (uint32_t m : cfg.m) jobs.emplace_back(Method::bilinear, k, m);

  std::ostringstream os;
  write_bench_header(os);
  for (size_t j = 0; j < jobs.size(); ++j) {
    const auto [method, k, m] = jobs[j];
    RandomStream rs = RandomStream(cfg.seed, stream_ids::kBench).substream(j);
    const BenchRecord rec = bench(method, dw, dv, k, m, cfg.bench_items, rs, opt);
    write_bench_row(os, rec, dw, dv);
    std::cout << to_string(method) << " k=" << k << " m=" << rec.m << "  " << fmt(rec.encode_time_per_item * 1e6)
              << " us/item, " << rec.hasher_bytes << " parameter bytes\n";
  }
  const fs::path dir = output_dir(cfg);
  write_text(dir / "bench.csv", os.str());
  std::cout << "wrote " << (dir / "bench.csv").string() << '\n';
  return 0;
}

/// Value of --config from argv, if any, so the file can seed the defaults
/// before flags are parsed.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.starts_with("--config=")) return std::string(a.substr(9));
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    if (const std::string path = find_config_path(argc, argv); !path.empty()) cfg = load_config(path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  }

  CLI::App app{"Binary codes from bilinear random projections"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key=value file; flags override its values");
  app.add_option("--dataset", cfg.dataset, "input file (IDX images, CSV or BLSH binary)");
  app.add_option("--format", cfg.format, "auto|idx|csv|blsh")->capture_default_str();
  app.add_option("--dw", cfg.dw, "rows per item");
  app.add_option("--dv", cfg.dv, "columns per item");
  app.add_option("--k", cfg.k, "bits per code (comma-separated list)")->delimiter(',');
  app.add_option("--k-single", cfg.k_single, "bits for the single family (default: --k)")->delimiter(',');
  app.add_option("--m", cfg.m, "oversampling factors (comma-separated list)")->delimiter(',');
  app.add_option("--method", cfg.method, "single|bilinear|angle|both")->capture_default_str();
  app.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  app.add_option("--tol", cfg.tol, "series truncation tolerance")->capture_default_str();
  app.add_option("--mc-samples", cfg.mc_samples, "Monte-Carlo bits per pair")->capture_default_str();
  app.add_option("--cov-samples", cfg.cov_samples, "Monte-Carlo bit pairs for covariance")->capture_default_str();
  app.add_option("--out", cfg.out, "output directory")->capture_default_str();
  app.add_option("--threads", cfg.threads, "worker threads (0: all cores)")->capture_default_str();
  app.add_option("--memory-cap-mb", cfg.memory_cap_mb, "refuse larger single projections")->capture_default_str();
  app.add_option("--bandwidth", cfg.bandwidth, "multiplies all data after scaling")->capture_default_str();
  app.add_option("--scale", cfg.scale, "auto|none|threshold|frobenius")->capture_default_str();
  app.add_option("--frobenius-target", cfg.frobenius_target, "max norm for --scale frobenius")->capture_default_str();
  app.add_option("--limit", cfg.limit, "use only the first N items")->capture_default_str();
  app.add_option("--queries", cfg.queries, "ground-truth queries")->capture_default_str();
  app.add_option("--kth", cfg.kth, "neighbor rank defining the threshold")->capture_default_str();
  app.add_option("--max-neighbors", cfg.max_neighbors, "drop queries with more neighbors")->capture_default_str();
  app.add_option("--repetitions", cfg.repetitions, "seeds per configuration")->capture_default_str();
  app.add_option("--sweep", cfg.sweep, "rank|radius")->capture_default_str();
  app.add_option("--pairs", cfg.pairs, "verify: random pairs")->capture_default_str();
  app.add_option("--identical-pairs", cfg.identical_pairs, "verify: extra X=Y pairs")->capture_default_str();
  app.add_option("--corr-pairs", cfg.corr_pairs, "eval-pr: data pairs for bit correlation")->capture_default_str();
  app.add_option("--bench-items", cfg.bench_items, "bench: items per timed pass")->capture_default_str();

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gt", "build ground-truth neighbor sets"},
      {"encode", "build a hasher and encode a dataset"},
      {"eval-pr", "precision-recall evaluation over repeated seeds"},
      {"verify", "check kernel and Hamming bounds on sampled pairs"},
      {"bench", "encode time and parameter memory"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    validate(cfg);
    if (cfg.command == "gt") return cmd_gt(cfg);
    if (cfg.command == "encode") return cmd_encode(cfg);
    if (cfg.command == "eval-pr") return cmd_eval_pr(cfg);
    if (cfg.command == "verify") return cmd_verify(cfg);
    return cmd_bench(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return static_cast<int>(ErrorKind::numeric);
  }
}

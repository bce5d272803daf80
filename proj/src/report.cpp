#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mnv2/bench.hpp"
#include "mnv2/dataset.hpp"
#include "mnv2/error.hpp"

namespace mnv2 {
namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string class_label(std::size_t i, std::size_t k) {
  return k == kFoodClasses ? std::string(kClassNames[i]) : "class_" + std::to_string(i);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename F>
std::string join(const std::vector<double>& v, const char* sep, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += fmt(v[i]);
  }
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("write failed: " + p.string());
}

nlohmann::json curve_json(const std::vector<EpochRecord>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EpochRecord& e : curve) {
    arr.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"val_accuracy", e.val_accuracy},
                   {"train_loss", e.train_loss}});
  }
  return arr;
}

} // namespace

nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const SweepCell& c : r.cells) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& curve : c.curves) curves.push_back(curve_json(curve));
    cells.push_back({
        {"size", c.size},
        {"accuracies", c.summary.accuracies},
        {"throughputs", c.summary.throughputs},
        {"num_classes", c.metrics.num_classes()},
        {"confusion", c.metrics.confusion()},
        {"curves", curves},
        {"epoch0_eval_accuracy", c.epoch0_eval_accuracy},
        {"seeds", c.seeds},
        {"bench",
         {{"size", c.bench.size},
          {"batch", c.bench.batch},
          {"threads", c.bench.threads},
          {"forward_only", c.bench.forward_only},
          {"end_to_end", c.bench.end_to_end},
          {"forward_rates", c.bench.forward_rates},
          {"end_to_end_rates", c.bench.end_to_end_rates}}},
    });
  }
  return {{"threads", r.threads},
          {"hardware", r.hardware},
          {"config_hash", r.config_hash},
          {"cells", cells}};
}

SweepResult sweep_from_json(const nlohmann::json& j) {
  try {
    SweepResult r;
    r.threads = j.at("threads").get<std::size_t>();
    r.hardware = j.at("hardware").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& jc : j.at("cells")) {
      SweepCell c;
      c.size = jc.at("size").get<std::size_t>();
      c.summary = summarize_runs(jc.at("accuracies").get<std::vector<double>>(),
                                 jc.at("throughputs").get<std::vector<double>>());
      c.metrics = Metrics::from_counts(jc.at("num_classes").get<std::size_t>(),
                                       jc.at("confusion").get<std::vector<std::uint64_t>>());
      for (const auto& jcurve : jc.at("curves")) {
        std::vector<EpochRecord> curve;
        for (const auto& e : jcurve) {
          curve.push_back(EpochRecord{e.at("epoch").get<std::size_t>(), e.at("lr").get<double>(),
                                      e.at("val_accuracy").get<double>(),
                                      e.at("train_loss").get<double>()});
        }
        c.curves.push_back(std::move(curve));
      }
      c.epoch0_eval_accuracy = jc.at("epoch0_eval_accuracy").get<std::vector<double>>();
      c.seeds = jc.at("seeds").get<std::vector<std::uint64_t>>();
      const auto& b = jc.at("bench");
      c.bench.size = b.at("size").get<std::size_t>();
      c.bench.batch = b.at("batch").get<std::size_t>();
      c.bench.threads = b.at("threads").get<std::size_t>();
      c.bench.forward_only = b.at("forward_only").get<double>();
      c.bench.end_to_end = b.at("end_to_end").get<double>();
      c.bench.forward_rates = b.at("forward_rates").get<std::vector<double>>();
      c.bench.end_to_end_rates = b.at("end_to_end_rates").get<std::vector<double>>();
      r.cells.push_back(std::move(c));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed sweep result: ") + e.what());
  }
}

std::string sweep_markdown(const SweepResult& r) {
  std::ostringstream out;
  out << "| Image size | Accuracies (%) | Speeds (img/s) | Mean accuracy (%) | Mean speed (img/s) "
         "| Disparity | Forward-only (img/s) | End-to-end (img/s) |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  for (const SweepCell& c : r.cells) {
    out << "| " << c.size << " | "
        << join(c.summary.accuracies, " - ", [](double v) { return fixed(v, 2); }) << " | "
        << join(c.summary.throughputs, " - ", [](double v) { return fixed(v, 1); }) << " | "
        << fixed(c.summary.mean_accuracy, 2) << " | " << fixed(c.summary.mean_throughput, 1)
        << " | " << fixed(c.summary.disparity, 2) << " | " << fixed(c.bench.forward_only, 1)
        << " | " << fixed(c.bench.end_to_end, 1) << " |\n";
  }
  out << "\nThreads: " << r.threads << ". Hardware: " << r.hardware << ".\n";
  return out.str();
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "size,run,accuracy_pct,images_per_second,mean_accuracy_pct,mean_images_per_second,"
         "disparity_pct,forward_only_ips,end_to_end_ips,bench_batch,threads,seed\n";
  for (const SweepCell& c : r.cells) {
    for (std::size_t i = 0; i < c.summary.accuracies.size(); ++i) {
      out << c.size << ',' << i + 1 << ',' << fixed(c.summary.accuracies[i], 4) << ','
          << fixed(i < c.summary.throughputs.size() ? c.summary.throughputs[i] : 0.0, 2) << ','
          << fixed(c.summary.mean_accuracy, 4) << ',' << fixed(c.summary.mean_throughput, 2) << ','
          << fixed(c.summary.disparity, 4) << ',' << fixed(c.bench.forward_only, 2) << ','
          << fixed(c.bench.end_to_end, 2) << ',' << c.bench.batch << ',' << r.threads << ','
          << (i < c.seeds.size() ? std::to_string(c.seeds[i]) : "") << '\n';
    }
  }
  return out.str();
}

std::string curves_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "epoch,lr";
  std::size_t rows = 0;
  for (const SweepCell& c : r.cells) {
    out << ",size_" << c.size;
    for (const auto& curve : c.curves) rows = std::max(rows, curve.size());
  }
  out << '\n';
  for (std::size_t e = 0; e < rows; ++e) {
    double lr = 0.0;
    for (const SweepCell& c : r.cells) {
      if (!c.curves.empty() && e < c.curves.front().size()) {
        lr = c.curves.front()[e].lr;
        break;
      }
    }
    char lr_buf[32];
    std::snprintf(lr_buf, sizeof(lr_buf), "%.6g", lr);
    out << e << ',' << lr_buf;
    for (const SweepCell& c : r.cells) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& curve : c.curves) {
        if (e < curve.size()) {
          sum += curve[e].val_accuracy;
          ++n;
        }
      }
      out << ',' << (n ? fixed(100.0 * sum / static_cast<double>(n), 4) : "");
    }
    out << '\n';
  }
  return out.str();
}

std::string confusion_raw_csv(const Metrics& m) {
  const std::size_t k = m.num_classes();
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t c = 0; c < k; ++c) out << ',' << csv_field(class_label(c, k));
  out << '\n';
  for (std::size_t r = 0; r < k; ++r) {
    out << csv_field(class_label(r, k));
    for (std::size_t c = 0; c < k; ++c) out << ',' << m.count(r, c);
    out << '\n';
  }
  return out.str();
}

std::string confusion_norm_csv(const Metrics& m) {
  const std::size_t k = m.num_classes();
  const Metrics::Normalized norm = m.normalized();
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t c = 0; c < k; ++c) out << ',' << csv_field(class_label(c, k));
  out << '\n';
  for (std::size_t r = 0; r < k; ++r) {
    out << csv_field(class_label(r, k));
    for (std::size_t c = 0; c < k; ++c) {
      out << ',' << (norm.empty_rows[r] ? std::string("NA") : fixed(norm.at(r, c), 6));
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::uint8_t> confusion_pgm(const Metrics& m, std::size_t cell) {
  const std::size_t k = m.num_classes();
  const std::size_t side = k * cell;
  const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const Metrics::Normalized norm = m.normalized();
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t r = y / cell;
      const std::size_t c = x / cell;
      const double v = norm.empty_rows[r] ? 0.0 : norm.at(r, c);
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * v)));
    }
  }
  return out;
}

std::string per_class_csv(const Metrics& m) {
  const std::size_t k = m.num_classes();
  const std::vector<double> acc = m.per_class_accuracy();
  std::ostringstream out;
  out << "class,samples,share_pct,accuracy_pct\n";
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t n = m.row_total(i);
    out << csv_field(class_label(i, k)) << ',' << n << ','
        << fixed(m.total() ? 100.0 * static_cast<double>(n) / static_cast<double>(m.total()) : 0.0, 2)
        << ',' << (std::isnan(acc[i]) ? std::string("NA") : fixed(100.0 * acc[i], 2)) << '\n';
  }
  return out.str();
}

ReportFiles render_report(const SweepResult& r) {
  if (r.cells.empty()) throw ConfigError("cannot render an empty sweep");
  const Metrics& m = r.cells.back().metrics;
  return ReportFiles{sweep_csv(r),         sweep_markdown(r),    curves_csv(r),
                     confusion_raw_csv(m), confusion_norm_csv(m), confusion_pgm(m),
                     per_class_csv(m)};
}

std::string manifest_json(const std::map<std::string, std::string>& entries) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries) j[k] = v;
  return j.dump(2) + "\n";
}

void write_report(const SweepResult& r, const std::map<std::string, std::string>& manifest,
                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const ReportFiles f = render_report(r);
  write_text(out_dir / "sweep.csv", f.sweep_csv);
  write_text(out_dir / "sweep.md", f.sweep_md);
  write_text(out_dir / "curves.csv", f.curves_csv);
  write_text(out_dir / "confusion_raw.csv", f.confusion_raw_csv);
  write_text(out_dir / "confusion_norm.csv", f.confusion_norm_csv);
  write_text(out_dir / "confusion.pgm", std::string(f.confusion_pgm.begin(), f.confusion_pgm.end()));
  write_text(out_dir / "per_class.csv", f.per_class_csv);
  std::map<std::string, std::string> entries = manifest;
  entries["hardware"] = r.hardware;
  entries["threads"] = std::to_string(r.threads);
  entries["config_hash"] = r.config_hash;
  std::string seeds;
  for (const SweepCell& c : r.cells) {
    for (auto s : c.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  }
  entries["run_seeds"] = seeds;
  write_text(out_dir / "manifest.json", manifest_json(entries));
}

} // namespace mnv2

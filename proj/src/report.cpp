/* Copyright 2026 The exitlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "exitlab/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "exitlab/error.hpp"

namespace exitlab {

std::string content_hash(std::string_view content) {
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("content_hash: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("content_hash: SHA-1 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string join_counts(std::span<const std::int64_t> v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(sep);
    out += std::to_string(v[i]);
  }
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string sweep_csv(const SweepResult& s) {
  std::ostringstream os;
  os << "tau,accuracy,speedup,mean_exit_layer,flops_total,executed_layers_total";
  for (int m = 1; m <= s.num_layers; ++m) os << ",exits_layer_" << m;
  os << '\n';
  for (const auto& r : s.rows) {
    os << format_real(r.tau) << ',' << format_real(r.accuracy) << ',' << format_real(r.speedup)
       << ',' << format_real(r.mean_exit_layer) << ',' << format_real(r.flops_total) << ','
       << r.executed_layers_total;
    if (!r.exit_histogram.empty()) os << ',' << join_counts(r.exit_histogram, ',');
    os << '\n';
  }
  return os.str();
}

nlohmann::json sweep_json(const SweepResult& s) {
  nlohmann::json j;
  j["policy"] = {{"kind", std::string(to_string(s.policy.kind))},
                 {"tau", s.policy.tau},
                 {"lambda", s.policy.lambda},
                 {"patience", s.policy.patience},
                 {"fixed_layer", s.policy.fixed_layer}};
  j["num_layers"] = s.num_layers;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : s.rows) {
    j["rows"].push_back({{"tau", r.tau},
                         {"accuracy", r.accuracy},
                         {"speedup", r.speedup},
                         {"mean_exit_layer", r.mean_exit_layer},
                         {"exit_histogram", r.exit_histogram},
                         {"flops_total", r.flops_total},
                         {"executed_layers_total", r.executed_layers_total}});
  }
  return j;
}

std::string train_report_csv(const TrainReport& r) {
  std::ostringstream os;
  const std::size_t layers = r.steps.empty() ? 0 : r.steps.front().ce.size();
  const std::size_t dars = r.steps.empty() ? 0 : r.steps.front().dar.size();
  os << "step,lr,total_loss";
  for (std::size_t m = 1; m <= layers; ++m) os << ",ce_layer_" << m;
  for (std::size_t m = 1; m <= dars; ++m) os << ",dar_layer_" << m;
  os << ",dev_accuracy\n";
  for (const auto& s : r.steps) {
    os << s.step << ',' << format_real(s.lr) << ',' << format_real(s.total_loss);
    for (double v : s.ce) os << ',' << format_real(v);
    for (double v : s.dar) os << ',' << format_real(v);
    os << ',';
    if (s.dev_accuracy) os << format_real(*s.dev_accuracy);
    os << '\n';
  }
  return os.str();
}

nlohmann::json train_report_json(const TrainReport& r) {
  nlohmann::json j;
  j["best_step"] = r.best_step;
  j["best_dev_accuracy"] = r.best_dev_accuracy;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : r.steps) {
    nlohmann::json row = {{"step", s.step}, {"lr", s.lr}, {"total_loss", s.total_loss},
                          {"ce", s.ce},     {"dar", s.dar}};
    row["dev_accuracy"] = s.dev_accuracy ? nlohmann::json(*s.dev_accuracy) : nlohmann::json();
    j["steps"].push_back(std::move(row));
  }
  return j;
}

std::string tradeoff_svg(std::span<const Curve> curves, std::string_view title) {
  constexpr double kW = 640, kH = 420, kL = 70, kR = 160, kT = 40, kB = 50;
  double x0 = 1.0, x1 = 1.0, y0 = 1.0, y1 = 0.0;
  bool any = false;
  for (const auto& c : curves) {
    for (const auto& [x, y] : c.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      any = true;
    }
  }
  if (!any) y0 = 0.0, y1 = 1.0;
  if (x1 - x0 < 1e-9) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-9) y0 -= 0.01, y1 += 0.01;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); };
  auto py = [&](double y) { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
     << kH - kB << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    char xl[32], yl[32];
    std::snprintf(xl, sizeof xl, "%.2f", xv);
    std::snprintf(yl, sizeof yl, "%.3f", yv);
    os << "<text x=\"" << px(xv) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\">"
       << xl << "</text>\n";
    os << "<text x=\"" << kL - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yl
       << "</text>\n";
  }
  os << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
     << "\" text-anchor=\"middle\">speed-up ratio</text>\n";
  os << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (kT + kH - kB) / 2 << ")\">accuracy</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Curve& c = curves[i];
    const char* color = kPalette[i % std::size(kPalette)];
    auto pts = c.points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    if (!c.marker_only && pts.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
      os << "\"/>\n";
    }
    for (const auto& [x, y] : pts) {
      if (c.marker_only) {
        os << "<path d=\"M" << px(x) - 6 << ',' << py(y) << " L" << px(x) << ',' << py(y) - 6
           << " L" << px(x) + 6 << ',' << py(y) << " L" << px(x) << ',' << py(y) + 6
           << " Z\" fill=\"" << color << "\"/>\n";
      } else {
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\"" << color
           << "\"/>\n";
      }
    }
    const double ly = kT + 18.0 * static_cast<double>(i);
    os << "<rect x=\"" << kW - kR + 14 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << color << "\"/>\n";
    os << "<text x=\"" << kW - kR + 30 << "\" y=\"" << ly << "\">" << xml_escape(c.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string histogram_svg(std::span<const std::int64_t> hist, std::string_view title) {
  constexpr double kW = 480, kH = 320, kL = 60, kR = 20, kT = 40, kB = 50;
  std::int64_t total = 0, peak = 0;
  for (auto v : hist) {
    total += v;
    peak = std::max(peak, v);
  }
  const double top = peak > 0 ? static_cast<double>(peak) / static_cast<double>(total) : 1.0;
  const double slot = hist.empty() ? 0.0 : (kW - kL - kR) / static_cast<double>(hist.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
     << kH - kB << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double frac =
        total > 0 ? static_cast<double>(hist[i]) / static_cast<double>(total) : 0.0;
    const double h = frac / top * (kH - kT - kB);
    const double x = kL + slot * static_cast<double>(i) + 0.15 * slot;
    os << "<rect x=\"" << x << "\" y=\"" << kH - kB - h << "\" width=\"" << 0.7 * slot
       << "\" height=\"" << h << "\" fill=\"#1f77b4\"/>\n";
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f%%", 100.0 * frac);
    os << "<text x=\"" << x + 0.35 * slot << "\" y=\"" << kH - kB - h - 4
       << "\" text-anchor=\"middle\">" << pct << "</text>\n";
    os << "<text x=\"" << x + 0.35 * slot << "\" y=\"" << kH - kB + 16
       << "\" text-anchor=\"middle\">" << i + 1 << "</text>\n";
  }
  os << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
     << "\" text-anchor=\"middle\">exit layer</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace exitlab

// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/metrics.hpp"

#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace gaitloop::metrics {
namespace {

struct Accum {
  std::string subject;
  double body_weight = 0.0;
  std::size_t frames = 0;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  Vector cell_abs;
};

ErrorReport finalize(std::vector<Accum>& acc) {
  ErrorReport r;
  double abs_total = 0.0, sq_total = 0.0, pct_weighted = 0.0, bw_sum = 0.0;
  std::size_t cells = 0;
  Vector cell_total;
  for (auto& a : acc) {
    if (a.frames == 0) continue;
    const auto k = static_cast<std::size_t>(a.cell_abs.size());
    SubjectError s;
    s.subject_id = a.subject;
    s.body_weight_N = a.body_weight;
    s.frames = a.frames;
    const double count = static_cast<double>(a.frames * k);
    s.mae_N = a.abs_sum / count;
    s.rmse_N = std::sqrt(a.sq_sum / count);
    s.mae_pct_bw = s.mae_N / a.body_weight * 100.0;
    for (Eigen::Index c = 0; c < a.cell_abs.size(); ++c)
      s.cell_mae_N.push_back(a.cell_abs[c] / static_cast<double>(a.frames));
    abs_total += a.abs_sum;
    sq_total += a.sq_sum;
    cells += a.frames * k;
    r.frames += a.frames;
    pct_weighted += s.mae_pct_bw * static_cast<double>(a.frames);
    bw_sum += a.body_weight;
    if (cell_total.size() == 0) cell_total = Vector::Zero(a.cell_abs.size());
    cell_total += a.cell_abs;
    r.subjects.push_back(std::move(s));
  }
  if (r.frames == 0) return r;
  r.mae_N = abs_total / static_cast<double>(cells);
  r.rmse_N = std::sqrt(sq_total / static_cast<double>(cells));
  r.mae_pct_bw = pct_weighted / static_cast<double>(r.frames);
  r.mae_pct_mean_bw = r.mae_N / (bw_sum / static_cast<double>(r.subjects.size())) * 100.0;
  for (Eigen::Index c = 0; c < cell_total.size(); ++c)
    r.cell_mae_N.push_back(cell_total[c] / static_cast<double>(r.frames));
  return r;
}

}  // namespace

ErrorReport prediction_error(const std::vector<const GaitTrial*>& trials, std::size_t n, std::size_t s,
                             const PredictFn& predict) {
  std::vector<Accum> acc;
  for (const auto* t : trials) {
    if (!(t->body_weight_N > 0.0))
      throw ConfigError("trial of subject " + t->subject_id + " has no positive body weight");
    auto it = std::find_if(acc.begin(), acc.end(), [&](const Accum& a) { return a.subject == t->subject_id; });
    if (it == acc.end()) {
      acc.push_back({t->subject_id, t->body_weight_N, 0, 0.0, 0.0, Vector::Zero(t->layout.plantar_dim())});
      it = std::prev(acc.end());
    } else if (it->body_weight != t->body_weight_N) {
      throw ConfigError("subject " + t->subject_id + " has inconsistent body weights");
    }
    const auto anchors = ingest::pair_anchors(t->length(), n, s, 1);
    if (anchors.empty()) continue;
    const Matrix pred = predict(*t, anchors);
    if (pred.rows() != static_cast<Eigen::Index>(anchors.size()) || pred.cols() != t->layout.plantar_dim())
      throw DimensionError("predictor returned a " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                           " matrix");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(anchors[i] + s);
      const Vector e = pred.row(static_cast<Eigen::Index>(i)).transpose() - t->plantar.row(row).transpose();
      it->abs_sum += e.cwiseAbs().sum();
      it->sq_sum += e.squaredNorm();
      it->cell_abs += e.cwiseAbs();
    }
    it->frames += anchors.size();
  }
  return finalize(acc);
}

ErrorReport prediction_error(const neural::Model& model, const std::vector<const GaitTrial*>& trials) {
  const auto n = static_cast<std::size_t>(model.meta.n);
  const auto s = static_cast<std::size_t>(model.meta.s);
  for (const auto* t : trials) model.check_compatible(n, s, t->layout, t->clock.rate_hz());
  return prediction_error(trials, n, s, [&](const GaitTrial& t, const std::vector<std::size_t>& anchors) {
    std::vector<Matrix> windows;
    windows.reserve(anchors.size());
    for (std::size_t a : anchors) windows.push_back(window_rows(t.imu, a, n));
    std::vector<const Matrix*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    return neural::predict_many(model, ptrs);
  });
}

ErrorReport merge_reports(const std::vector<ErrorReport>& parts) {
  std::vector<Accum> acc;
  for (const auto& p : parts)
    for (const auto& s : p.subjects) {
      const auto k = s.cell_mae_N.size();
      Accum a{s.subject_id, s.body_weight_N, s.frames, 0.0, 0.0, Vector::Zero(static_cast<Eigen::Index>(k))};
      const double count = static_cast<double>(s.frames * k);
      a.abs_sum = s.mae_N * count;
      a.sq_sum = s.rmse_N * s.rmse_N * count;
      for (std::size_t c = 0; c < k; ++c) a.cell_abs[static_cast<Eigen::Index>(c)] = s.cell_mae_N[c] * static_cast<double>(s.frames);
      auto it = std::find_if(acc.begin(), acc.end(), [&](const Accum& x) { return x.subject == a.subject; });
      if (it == acc.end()) {
        acc.push_back(std::move(a));
      } else {
        it->frames += a.frames;
        it->abs_sum += a.abs_sum;
        it->sq_sum += a.sq_sum;
        it->cell_abs += a.cell_abs;
      }
    }
  return finalize(acc);
}

std::string error_csv(const ErrorReport& report, const SensorLayout& layout) {
  std::string out = "subject,body_weight_N,frames,mae_N,mae_pct_bw,rmse_N";
  for (const auto& c : layout.plantar_columns()) out += ",mae_" + c;
  out += "\n";
  auto row = [&](const std::string& id, double bw, std::size_t frames, double mae, double pct, double rmse,
                 const std::vector<double>& cells) {
    out += id + "," + csv::format(bw) + "," + std::to_string(frames) + "," + csv::format(mae) + "," + csv::format(pct) +
           "," + csv::format(rmse);
    for (double c : cells) out += "," + csv::format(c);
    out += "\n";
  };
  for (const auto& s : report.subjects)
    row(s.subject_id, s.body_weight_N, s.frames, s.mae_N, s.mae_pct_bw, s.rmse_N, s.cell_mae_N);
  double bw = 0.0;
  for (const auto& s : report.subjects) bw += s.body_weight_N;
  if (!report.subjects.empty()) bw /= static_cast<double>(report.subjects.size());
  row("all", bw, report.frames, report.mae_N, report.mae_pct_bw, report.rmse_N, report.cell_mae_N);
  return out;
}

std::string error_json(const ErrorReport& report) {
  nlohmann::ordered_json j;
  j["frames"] = report.frames;
  j["mae_N"] = report.mae_N;
  j["mae_pct_bw"] = report.mae_pct_bw;
  j["mae_pct_mean_bw"] = report.mae_pct_mean_bw;
  j["rmse_N"] = report.rmse_N;
  j["cell_mae_N"] = report.cell_mae_N;
  auto subjects = nlohmann::ordered_json::array();
  for (const auto& s : report.subjects)
    subjects.push_back({{"subject", s.subject_id},
                        {"body_weight_N", s.body_weight_N},
                        {"frames", s.frames},
                        {"mae_N", s.mae_N},
                        {"mae_pct_bw", s.mae_pct_bw},
                        {"rmse_N", s.rmse_N},
                        {"cell_mae_N", s.cell_mae_N}});
  j["subjects"] = subjects;
  return j.dump(2) + "\n";
}

std::vector<std::pair<std::size_t, std::size_t>> default_sweep_points() {
  std::vector<std::pair<std::size_t, std::size_t>> pts;
  for (std::size_t n : {1, 5, 10, 20, 50, 100}) pts.emplace_back(n, 20);
  for (std::size_t s : {1, 10, 50, 100, 150, 200}) pts.emplace_back(20, s);
  return pts;
}

std::vector<std::pair<std::size_t, std::size_t>> full_sweep_grid() {
  std::vector<std::pair<std::size_t, std::size_t>> pts;
  for (std::size_t n : {1, 5, 10, 20, 50, 100})
    for (std::size_t s : {1, 10, 20, 50, 100, 150, 200}) pts.emplace_back(n, s);
  return pts;
}

const SweepCell* SweepResult::find(std::size_t n, std::size_t s) const {
  for (const auto& c : cells)
    if (c.n == n && c.s == s) return &c;
  return nullptr;
}

std::uint64_t derive_seed(std::uint64_t master, std::size_t n, std::size_t s, const std::string& subject) {
  // FNV-1a over the subject id, mixed with splitmix64 steps.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : subject) h = (h ^ c) * 1099511628211ULL;
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(mix(master) ^ n) ^ s) ^ h);
}

SweepResult run_sweep(const std::vector<SubjectData>& subjects, const SweepConfig& config,
                      const std::function<void(const SweepCell&)>& progress) {
  config.train.validate();
  if (subjects.empty()) throw ConfigError("sweep needs at least one subject");
  SweepResult result;
  result.epochs = config.train.epochs;
  for (auto [n, s] : config.points) {
    if (n < 1 || s < 1) throw ConfigError("sweep points need n >= 1 and s >= 1");
    SweepCell cell;
    cell.n = n;
    cell.s = s;
    std::vector<ErrorReport> parts;
    for (const auto& subj : subjects) {
      std::size_t train_pairs = 0, test_anchors = 0;
      for (const auto* t : subj.train) train_pairs += ingest::pair_anchors(t->length(), n, s, config.train.stride).size();
      for (const auto* t : subj.test) test_anchors += ingest::pair_anchors(t->length(), n, s, 1).size();
      if (train_pairs < 2 || test_anchors == 0) continue;
      neural::TrainConfig tc = config.train;
      tc.rng_seed = derive_seed(config.seed, n, s, subj.subject_id);
      const auto trained = neural::train(subj.train, n, s, tc, subj.subject_id);
      parts.push_back(prediction_error(trained.model, subj.test));
    }
    if (!parts.empty()) {
      const ErrorReport merged = merge_reports(parts);
      cell.present = true;
      cell.subjects = merged.subjects.size();
      cell.mae_N = merged.mae_N;
      cell.mae_pct_bw = merged.mae_pct_bw;
      cell.mae_pct_mean_bw = merged.mae_pct_mean_bw;
    }
    result.cells.push_back(cell);
    if (progress) progress(cell);
  }
  return result;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "n,s,present,subjects,mae_N,mae_pct_bw,mae_pct_mean_bw,epochs\n";
  for (const auto& c : result.cells) {
    out += std::to_string(c.n) + "," + std::to_string(c.s) + "," + (c.present ? "1" : "0") + "," +
           std::to_string(c.subjects) + ",";
    if (c.present)
      out += csv::format(c.mae_N) + "," + csv::format(c.mae_pct_bw) + "," + csv::format(c.mae_pct_mean_bw);
    else
      out += ",,";
    out += "," + std::to_string(result.epochs) + "\n";
  }
  return out;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

namespace {

TimingStats stats_of(std::vector<double> v) {
  TimingStats s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean_abs_s = sum / static_cast<double>(v.size());
  s.min_abs_s = v.front();
  s.max_abs_s = v.back();
  s.q25_abs_s = quantile(v, 0.25);
  s.median_abs_s = quantile(v, 0.5);
  s.q75_abs_s = quantile(v, 0.75);
  return s;
}

}  // namespace

TimingReport timing_report(const std::vector<phase::TimingComparison>& comparisons) {
  TimingReport r;
  std::vector<double> walking, starting;
  for (const auto& c : comparisons) {
    r.unmatched_a += c.unmatched_a;
    r.unmatched_b += c.unmatched_b;
    for (const auto& m : c.matches) {
      (m.context == EventContext::Walking ? walking : starting).push_back(std::abs(m.dt_s));
      r.pairs.push_back(m);
    }
  }
  r.walking = stats_of(std::move(walking));
  r.starting = stats_of(std::move(starting));
  return r;
}

std::string timing_csv(const TimingReport& report) {
  std::string out = "context,count,mean_abs_s,max_abs_s,min_abs_s,q25_abs_s,median_abs_s,q75_abs_s\n";
  auto row = [&](const char* name, const TimingStats& s) {
    out += std::string(name) + "," + std::to_string(s.count) + "," + csv::format(s.mean_abs_s) + "," +
           csv::format(s.max_abs_s) + "," + csv::format(s.min_abs_s) + "," + csv::format(s.q25_abs_s) + "," +
           csv::format(s.median_abs_s) + "," + csv::format(s.q75_abs_s) + "\n";
  };
  row("walking", report.walking);
  row("starting", report.starting);
  return out;
}

std::string timing_pairs_csv(const TimingReport& report) {
  std::string out = "context,foot,dt_s,abs_dt_s\n";
  for (const auto& m : report.pairs)
    out += std::string(to_string(m.context)) + "," + std::string(to_string(m.foot)) + "," + csv::format(m.dt_s) + "," +
           csv::format(std::abs(m.dt_s)) + "\n";
  return out;
}

std::string timing_json(const TimingReport& report) {
  auto stats = [](const TimingStats& s) {
    return nlohmann::ordered_json{{"count", s.count},         {"mean_abs_s", s.mean_abs_s},
                                  {"max_abs_s", s.max_abs_s}, {"min_abs_s", s.min_abs_s},
                                  {"q25_abs_s", s.q25_abs_s}, {"median_abs_s", s.median_abs_s},
                                  {"q75_abs_s", s.q75_abs_s}};
  };
  nlohmann::ordered_json j;
  j["walking"] = stats(report.walking);
  j["starting"] = stats(report.starting);
  j["unmatched_predicted"] = report.unmatched_a;
  j["unmatched_reference"] = report.unmatched_b;
  return j.dump(2) + "\n";
}

std::string sweep_gnuplot(const std::string& csv_name) {
  return "set datafile separator ','\n"
         "set terminal pngcairo size 900,400\n"
         "set output 'sweep.png'\n"
         "set multiplot layout 1,2\n"
         "set xlabel 'n (frames)'\nset ylabel 'MAE (% body weight)'\nset logscale x\n"
         "plot '" + csv_name + "' every ::1 using ($2==20 && $3==1 ? $1 : 1/0):6 with linespoints title 's = 20'\n"
         "set xlabel 's (frames)'\nunset logscale x\n"
         "plot '" + csv_name + "' every ::1 using ($1==20 && $3==1 ? $2 : 1/0):6 with linespoints title 'n = 20'\n"
         "unset multiplot\n";
}

std::string subject_gnuplot(const std::string& csv_name) {
  return "set datafile separator ','\n"
         "set terminal pngcairo size 800,400\n"
         "set output 'subjects.png'\n"
         "set style data histograms\nset style fill solid 0.6\nset boxwidth 0.8\n"
         "set ylabel 'MAE (N)'\nset y2label 'MAE (% body weight)'\nset y2tics\n"
         "plot '" + csv_name + "' every ::1 using 4:xtic(1) title 'N', '' every ::1 using 5 axes x1y2 title '% BW'\n";
}

std::string timing_gnuplot(const std::string& pairs_csv_name) {
  return "set datafile separator ','\n"
         "set terminal pngcairo size 600,400\n"
         "set output 'timing.png'\n"
         "set style data boxplot\nset style fill solid 0.4\n"
         "set xtics ('walking' 1, 'starting' 2)\nset ylabel '|dt| (s)'\n"
         "plot '" + pairs_csv_name + "' every ::1 using (1):(strcol(1) eq 'walking' ? $4 : 1/0) notitle, "
         "'' every ::1 using (2):(strcol(1) eq 'starting' ? $4 : 1/0) notitle\n";
}

}  // namespace gaitloop::metrics

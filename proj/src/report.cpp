#include "analysparse/report.hpp"

#include <fstream>
#include <sstream>

#include "analysparse/datagen.hpp"
#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return cells;
}

}  // namespace

void write_matrix_csv(const std::filesystem::path& path, const Tensor& M) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < M.cols(); ++c) out << (c ? "," : "") << "c" << c;
  out << "\n";
  for (std::size_t r = 0; r < M.rows(); ++r) {
    for (std::size_t c = 0; c < M.cols(); ++c) out << (c ? "," : "") << format_double(M(r, c));
    out << "\n";
  }
}

void write_vector_csv(const std::filesystem::path& path, const Tensor& v, const std::string& header) {
  auto out = open_out(path);
  out << header << "\n";
  for (double x : v.values()) out << format_double(x) << "\n";
}

Tensor read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& cell : cells) {
      try {
        row.push_back(parse_double(path.string(), cell));
      } catch (const ConfigError&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError(path.string() + ": non-numeric row " + std::to_string(rows + 1));
    }
    first = false;
    if (rows == 0) cols = row.size();
    if (row.size() != cols) throw ConfigError(path.string() + ": ragged rows");
    data.insert(data.end(), row.begin(), row.end());
    ++rows;
  }
  return Tensor(rows, cols, std::move(data));
}

const std::vector<std::string>& train_report_files() {
  static const std::vector<std::string> files = {
      "train_loss.csv", "val_loss.csv",  "references.csv",           "D_hat.csv",
      "D_hat_sorted_rescaled.csv",       "match_report.csv",         "manifest.txt"};
  return files;
}

Tensor comparison_reference(const TrainReport& report, std::size_t p) {
  const Tensor dtv = make_dtv(p);
  return report.references.has_tv ? scale(dtv, report.references.tv_lambda) : dtv;
}

MatchReport write_train_report(const std::filesystem::path& dir, const TrainReport& report,
                               const KeyValues& manifest) {
  std::filesystem::create_directories(dir);
  const Tensor& D = report.final_D;

  {
    auto out = open_out(dir / "train_loss.csv");
    out << "iteration,loss\n";
    for (std::size_t t = 0; t < report.train_loss.size(); ++t) {
      out << t << "," << format_double(report.train_loss[t]) << "\n";
    }
  }
  {
    auto out = open_out(dir / "val_loss.csv");
    out << "iteration,loss,loss_train_budget\n";
    for (const auto& v : report.val_loss) {
      out << v.iteration << "," << format_double(v.loss) << "," << format_double(v.loss_train_budget)
          << "\n";
    }
  }
  {
    auto out = open_out(dir / "references.csv");
    out << "reference,lambda,loss\n";
    out << "zero,0," << format_double(report.references.zero) << "\n";
    if (report.references.has_tv) {
      out << "lambda_dtv," << format_double(report.references.tv_lambda) << ","
          << format_double(report.references.tv) << "\n";
    }
  }
  write_matrix_csv(dir / "D_hat.csv", D);
  if (is_zero(D)) {
    write_matrix_csv(dir / "D_hat_sorted_rescaled.csv", sort_columns(D));
  } else {
    write_matrix_csv(dir / "D_hat_sorted_rescaled.csv", rescale_unit(sort_columns(D)));
  }

  const MatchReport match = match_columns(D, comparison_reference(report, D.rows()));
  {
    auto out = open_out(dir / "match_report.csv");
    out << "learned_column,reference_column,abs_cosine\n";
    for (std::size_t k = 0; k < match.assignment.size(); ++k) {
      out << match.assignment[k].first << "," << match.assignment[k].second << ","
          << format_double(match.cosines[k]) << "\n";
    }
  }

  KeyValues full = manifest;
  full.set("result.method", report.method);
  full.set("result.projection", to_string(report.projection));
  full.set("result.eta2", format_double(report.eta2));
  full.set("result.iterations", std::to_string(report.train_loss.size()));
  full.set("result.final_train_loss",
           report.train_loss.empty() ? "nan" : format_double(report.train_loss.back()));
  full.set("result.final_val_loss", format_double(report.final_val_loss()));
  full.set("result.ref_zero_loss", format_double(report.references.zero));
  if (report.references.has_tv) {
    full.set("result.ref_tv_lambda", format_double(report.references.tv_lambda));
    full.set("result.ref_tv_loss", format_double(report.references.tv));
  }
  full.set("result.mean_abs_cosine", format_double(match.mean_abs_cosine));
  full.set("result.dtv_convention", "circulant");
  {
    auto out = open_out(dir / "manifest.txt");
    out << "# resolved parameters and results; wall time is informational only\n";
    out << full.to_text();
    out << "# wall_time_seconds=" << report.wall_time << "\n";
  }
  return match;
}

}  // namespace analysparse

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "analysparse/config.hpp"
#include "analysparse/learner.hpp"
#include "analysparse/tensor.hpp"

namespace analysparse {

/// Matrix as CSV with a header row c0,c1,...
void write_matrix_csv(const std::filesystem::path& path, const Tensor& M);
/// Reads a numeric CSV; a non-numeric first line is treated as a header.
Tensor read_matrix_csv(const std::filesystem::path& path);
/// Single column with the given header.
void write_vector_csv(const std::filesystem::path& path, const Tensor& v, const std::string& header);

/// Files written by write_train_report, in order.
const std::vector<std::string>& train_report_files();

/// Writes train_loss.csv, val_loss.csv, references.csv, D_hat.csv,
/// D_hat_sorted_rescaled.csv, match_report.csv and manifest.txt into `dir`.
/// `manifest` holds the resolved run parameters; results are appended.
MatchReport write_train_report(const std::filesystem::path& dir, const TrainReport& report,
                               const KeyValues& manifest);

/// Reference dictionary the learned one is compared against: lambda * D_TV
/// when a TV reference exists, D_TV otherwise.
Tensor comparison_reference(const TrainReport& report, std::size_t p);

}  // namespace analysparse

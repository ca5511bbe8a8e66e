#pragma once

// Tidy, plot-ready CSV tables built from finished runs. Column schemas:
//
//   fig2a  complexity_deg,rho,seed,hard_probe_err
//   fig2b  complexity_deg,rho,seed,mean_ratio,mean_phantom_ratio        [ratios]
//   fig3   mode,rho,seed,step,source,k_frac,cum_frac                    [lorenz]
//   fig4   mode,rho,seed,step,source,bin_x,bin_y,x_lo,x_hi,y_lo,y_hi,median_lambda,count  [bins]
//   fig5   intervention,v_star_ratio,seed,hard_probe_err                [ratios for lsam/sgd rows]
//   fig6   noise_kind,noise_target,rho,seed,hard_probe_err
//   fig7   batch_size,rho,seed,hard_probe_err
//
// fig2a/2b/6/7 take SGD (as rho = 0) and LSAM runs; fig5 takes intervention
// runs at their v*_hard/v*_easy, plus LSAM and SGD runs at their
// training-mean phantom and real ratios.

#include <filesystem>
#include <string>
#include <vector>

#include "samlab/runner.hpp"

namespace samlab::figures {

const std::vector<std::string>& figure_names();
std::vector<std::string> schema(const std::string& figure);

/// Writes <out_dir>/<figure>.csv and returns its path. Throws
/// MissingAnalysisError when a contributing run lacks a needed analysis
/// and ContractError when no run contributes at all.
std::filesystem::path emit_figure_data(const std::vector<runner::RunManifest>& manifests,
                                       const std::string& figure,
                                       const std::filesystem::path& out_dir);

}  // namespace samlab::figures

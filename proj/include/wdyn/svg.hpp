#pragma once

// Plain SVG rendering of the report figures. Output depends only on the
// inputs, so identical runs give identical bytes.

#include "wdyn/covariance_probe.hpp"
#include "wdyn/dynamics_stats.hpp"
#include "wdyn/perplexity.hpp"

#include <optional>
#include <string>
#include <vector>

namespace wdyn::svg {

// Panels whose inputs are absent are left out.
struct ReportPlots {
    const stats::MsdCurve* msd = nullptr;
    std::optional<std::int64_t> peak_step; // dashed vertical line on the MSD panel
    const stats::DensityMovie* density = nullptr;
    const probe::RankCurve* rank = nullptr;
    std::vector<const ppl::PerplexityCurve*> perplexity; // linear and log panels
};

std::string render(const ReportPlots& plots);

} // namespace wdyn::svg

#pragma once

// CSV writers for harness products. Every number is printed with 17
// significant digits so files round-trip exactly.

#include <iosfwd>
#include <string>

#include "qfluct/harness.hpp"

namespace qfluct::io {

std::string num(double v);

void write_thermal_cells_csv(std::ostream& out, const ThermalStudy& s);
void write_thermal_scaling_csv(std::ostream& out, const ThermalStudy& s);
void write_thermal_fits_csv(std::ostream& out, const ThermalStudy& s);
void write_timeseries_csv(std::ostream& out, const std::vector<std::pair<std::string, ObservableTimeSeries>>& series,
                          const std::vector<double>& reference);
void write_populations_csv(std::ostream& out, const std::vector<std::pair<std::string, DiagonalEnsemble>>& states);
void write_crook_cells_csv(std::ostream& out, const CrookStudy& s);
void write_crook_series_csv(std::ostream& out, const CrookStudy& s);
void write_backward_csv(std::ostream& out, const CrookCell& c);
void write_condition_json(std::ostream& out, const std::vector<ConditionCell>& cells);
void write_transition_csv(std::ostream& out, const Curve& c);
void write_rstat_json(std::ostream& out, const RStatStudy& s);

}  // namespace qfluct::io

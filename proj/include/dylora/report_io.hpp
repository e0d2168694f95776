#pragma once

#include <string>
#include <vector>

#include "dylora/bench.hpp"
#include "dylora/trainer.hpp"

namespace dylora {

// Shortest round-trip decimal rendering of a double; deterministic, so
// rerunning a command reproduces output files byte for byte.
std::string format_double(double v);

std::string trace_csv(const std::vector<TraceRow>& trace);
std::string report_csv(const EvalReport& report); // header: rank,arm,seed,metric

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace dylora

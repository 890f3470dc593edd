#pragma once

// CSV schemas.
//   discrete:   id,V,R,M,delta,S1,Sc,B[,W1..Wd]
//   continuous: id,V,R,X,delta,S1,Sc,B
// Optional fields are blank when absent. Reals are written in shortest
// round-trip form, so write(read(text)) reproduces text written by this module.

#include <iosfwd>
#include <string>
#include <string_view>

#include "vaxsurr/acem.hpp"
#include "vaxsurr/dft_cox.hpp"

namespace vaxsurr {

std::string format_real(double x);

std::string to_csv(const Dataset& data);
// The grid is not part of the CSV; K is taken from the grid passed in.
Dataset dataset_from_csv(std::string_view text, const TimeGrid& grid);
// K inferred as max(M, 2) over the rows with unit-spaced visit times.
Dataset dataset_from_csv(std::string_view text);

std::string to_csv(const ContinuousDataset& data);
ContinuousDataset continuous_from_csv(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace vaxsurr

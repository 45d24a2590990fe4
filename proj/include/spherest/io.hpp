#pragma once

#include <string>
#include <vector>

#include "spherest/sectioning.hpp"
#include "spherest/simulate.hpp"
#include "spherest/unfold.hpp"

namespace spherest::io {

// Writes content to path via a temporary file and rename, so readers never
// observe a partial file.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// Spheroid CSV: header cx,cy,cz,ax,ay,az,a,c.
std::string format_spheroids_csv(const std::vector<simulate::Spheroid>& spheroids);
std::vector<simulate::Spheroid> parse_spheroids_csv(const std::string& text);
void write_spheroids_csv(const std::string& path,
                         const std::vector<simulate::Spheroid>& spheroids);
std::vector<simulate::Spheroid> read_spheroids_csv(const std::string& path);

// Ellipse CSV: header id,x,y,A,C,S,alpha; angles in radians. Also the
// ingestion format for real section tables.
std::string format_ellipses_csv(
    const std::vector<sectioning::SectionEllipse>& ellipses);
std::vector<sectioning::SectionEllipse> parse_ellipses_csv(const std::string& text);
void write_ellipses_csv(const std::string& path,
                        const std::vector<sectioning::SectionEllipse>& ellipses);
std::vector<sectioning::SectionEllipse> read_ellipses_csv(const std::string& path);

// Histogram CSV: header i,j,k,value over all classes of the binning.
std::string format_histogram_csv(const unfold::Histogram3D& h);
void write_histogram_csv(const std::string& path, const unfold::Histogram3D& h);

}  // namespace spherest::io

#pragma once

namespace agbd {

// Coordinate reference tag carried by rasters and zone sets. "geographic"
// means degrees of longitude/latitude; "planar" means meters in the
// configured equal-area plane.
enum class Crs { geographic, planar };

namespace geom {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

}  // namespace geom
}  // namespace agbd

#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lascar/mesh.hpp"

namespace lascar {

/// ASCII PLY with fixed per-vertex properties x y z nx ny nz label prob_scar.
/// Property names are part of the format contract for downstream tooling.
inline void write_ply(const SurfaceMesh& mesh, const std::vector<uint8_t>& labels,
                      const std::vector<double>& prob_scar, const std::string& path) {
    if (labels.size() != mesh.vertices.size() || prob_scar.size() != mesh.vertices.size())
        throw std::invalid_argument("per-vertex arrays must match vertex count");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write PLY: " + path);

    f << "ply\nformat ascii 1.0\n";
    f << "element vertex " << mesh.vertices.size() << "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz"})
        f << "property float " << p << "\n";
    f << "property int label\n";
    f << "property float prob_scar\n";
    f << "element face " << mesh.triangles.size() << "\n";
    f << "property list uchar int vertex_indices\n";
    f << "end_header\n";

    char line[256];
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3& v = mesh.vertices[i];
        const Vec3& n = mesh.normals[i];
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g %.9g %.9g %d %.9g\n", v.x,
                      v.y, v.z, n.x, n.y, n.z, static_cast<int>(labels[i]), prob_scar[i]);
        f << line;
    }
    for (const auto& t : mesh.triangles)
        f << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

}  // namespace lascar

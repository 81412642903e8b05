#pragma once

#include <string>

#include "lstop/analysis.hpp"

namespace lstop {

/// Active mesh as legacy VTK quads with per-cell refinement level and phase
/// (-1 solid, 0 cut, +1 void).
void write_mesh_vtk(const std::string& path, const HierarchicalMesh& mesh,
                    const CutDecomposition& dec);

/// Integration triangles with phase scalar; when a displacement vector is
/// supplied, point data carries the displacement field and cell data the
/// centroid stress (Voigt components plus von Mises).
struct StressField {
  const ThbBasis* design;
  const Eigen::VectorXd* s;
  SchemeParams scheme;
  ElasticParams elastic;
};

void write_design_vtk(const std::string& path, const HierarchicalMesh& mesh,
                      const CutDecomposition& dec, const EnrichmentMap* enr = nullptr,
                      const ThbBasis* state = nullptr, const Eigen::VectorXd* u = nullptr,
                      const StressField* stress = nullptr);

}  // namespace lstop

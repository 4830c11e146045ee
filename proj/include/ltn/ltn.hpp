#pragma once

// Umbrella header.
#include "ltn/types.hpp"
#include "ltn/quadrature.hpp"
#include "ltn/geometry.hpp"
#include "ltn/mesh.hpp"
#include "ltn/mesh_ops.hpp"
#include "ltn/meshgen.hpp"
#include "ltn/kernels.hpp"
#include "ltn/parallel.hpp"
#include "ltn/dofmap.hpp"
#include "ltn/broken_field.hpp"
#include "ltn/assembly_local.hpp"
#include "ltn/assembly_nonlocal.hpp"
#include "ltn/ltn_solver.hpp"
#include "ltn/shape_calculus.hpp"
#include "ltn/optimizer.hpp"
#include "ltn/io.hpp"
#include "ltn/config.hpp"

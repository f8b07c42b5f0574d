#ifndef AFEM_AFEM_HPP
#define AFEM_AFEM_HPP

#include "afem/assembly.hpp"
#include "afem/driver.hpp"
#include "afem/estimator.hpp"
#include "afem/geometry.hpp"
#include "afem/marking.hpp"
#include "afem/mesh.hpp"
#include "afem/problem.hpp"
#include "afem/quadrature.hpp"
#include "afem/report.hpp"
#include "afem/solver.hpp"
#include "afem/space.hpp"
#include "afem/sparse.hpp"

#endif

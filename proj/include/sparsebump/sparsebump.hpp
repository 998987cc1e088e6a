#pragma once

#include "sparsebump/error.hpp"
#include "sparsebump/grid.hpp"
#include "sparsebump/weights.hpp"
#include "sparsebump/maximal.hpp"
#include "sparsebump/sparse.hpp"
#include "sparsebump/bumps.hpp"
#include "sparsebump/operators.hpp"
#include "sparsebump/prooftrace.hpp"
#include "sparsebump/io.hpp"
#include "sparsebump/lab.hpp"

#pragma once

#include "fkkam/cohomology.hpp"
#include "fkkam/errors.hpp"
#include "fkkam/fft.hpp"
#include "fkkam/fk_model.hpp"
#include "fkkam/io.hpp"
#include "fkkam/kam_solver.hpp"
#include "fkkam/lindstedt.hpp"
#include "fkkam/oracle.hpp"
#include "fkkam/spectral_field.hpp"
#include "fkkam/twisted.hpp"

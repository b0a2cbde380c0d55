#ifndef QUANTMERGE_QUANTMERGE_HPP
#define QUANTMERGE_QUANTMERGE_HPP

#include "quantmerge/csv.hpp"
#include "quantmerge/data.hpp"
#include "quantmerge/dates.hpp"
#include "quantmerge/errors.hpp"
#include "quantmerge/experiment.hpp"
#include "quantmerge/features.hpp"
#include "quantmerge/gbdt.hpp"
#include "quantmerge/grid.hpp"
#include "quantmerge/kvconfig.hpp"
#include "quantmerge/matrix.hpp"
#include "quantmerge/qrf.hpp"
#include "quantmerge/rng.hpp"
#include "quantmerge/scoring.hpp"
#include "quantmerge/synthetic.hpp"
#include "quantmerge/threading.hpp"

#endif  // QUANTMERGE_QUANTMERGE_HPP

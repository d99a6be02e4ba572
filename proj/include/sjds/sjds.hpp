#pragma once

#include "sjds/dataset.hpp"
#include "sjds/error.hpp"
#include "sjds/estimator.hpp"
#include "sjds/matrix.hpp"
#include "sjds/pipeline.hpp"
#include "sjds/report.hpp"
#include "sjds/rng.hpp"
#include "sjds/sampling.hpp"
#include "sjds/simulation.hpp"
#include "sjds/statistic.hpp"

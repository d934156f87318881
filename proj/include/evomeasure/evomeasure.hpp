#ifndef EVOMEASURE_EVOMEASURE_HPP
#define EVOMEASURE_EVOMEASURE_HPP

#include "evomeasure/config.hpp"
#include "evomeasure/dynamics.hpp"
#include "evomeasure/errors.hpp"
#include "evomeasure/experiments.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/flat_metric.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"
#include "evomeasure/reductions.hpp"
#include "evomeasure/reference.hpp"
#include "evomeasure/serialization.hpp"

#endif  // EVOMEASURE_EVOMEASURE_HPP

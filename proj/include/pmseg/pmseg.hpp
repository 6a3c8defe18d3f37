#pragma once

#include "pmseg/error.hpp"
#include "pmseg/trajectory.hpp"
#include "pmseg/ingest.hpp"
#include "pmseg/wavelet.hpp"
#include "pmseg/gmm.hpp"
#include "pmseg/tsc.hpp"
#include "pmseg/pmdd.hpp"
#include "pmseg/metrics.hpp"
#include "pmseg/synth.hpp"
#include "pmseg/serialize.hpp"
#include "pmseg/pipeline.hpp"

#pragma once

// Convenience include for the whole toolkit.

#include "wsikit/annotation_index.hpp"
#include "wsikit/batch.hpp"
#include "wsikit/core.hpp"
#include "wsikit/experts.hpp"
#include "wsikit/fusion.hpp"
#include "wsikit/metrics.hpp"
#include "wsikit/pipeline.hpp"
#include "wsikit/pyramid.hpp"
#include "wsikit/raster.hpp"
#include "wsikit/rtree.hpp"
#include "wsikit/slide_io.hpp"
#include "wsikit/synth.hpp"

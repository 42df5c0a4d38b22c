#pragma once

#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/support_set.hpp"
#include "ics/volume_io.hpp"
#include "ics/segmenter.hpp"
#include "ics/ref_segmenter.hpp"
#include "ics/bridge.hpp"
#include "ics/cascade.hpp"
#include "ics/eval.hpp"
#include "ics/report.hpp"
#include "ics/phantom.hpp"
#include "ics/harness.hpp"

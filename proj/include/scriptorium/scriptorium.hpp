#pragma once

#include "scriptorium/core/coco_json.hpp"
#include "scriptorium/core/error.hpp"
#include "scriptorium/core/executor.hpp"
#include "scriptorium/core/types.hpp"
#include "scriptorium/core/yolo.hpp"
#include "scriptorium/merge/match.hpp"
#include "scriptorium/merge/merge.hpp"
#include "scriptorium/merge/parsers.hpp"
#include "scriptorium/eval/metrics.hpp"
#include "scriptorium/split/split.hpp"
#include "scriptorium/detector/protocol.hpp"
#include "scriptorium/detector/synthetic.hpp"
#include "scriptorium/detector/detector.hpp"
#include "scriptorium/al/selection.hpp"
#include "scriptorium/al/experiment.hpp"
#include "scriptorium/al/report.hpp"
#include "scriptorium/synth.hpp"

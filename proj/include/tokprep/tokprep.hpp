#pragma once

#include "tokprep/error.hpp"
#include "tokprep/eval/bench.hpp"
#include "tokprep/eval/datasets.hpp"
#include "tokprep/eval/dependency.hpp"
#include "tokprep/eval/embedding_dump.hpp"
#include "tokprep/eval/logreg.hpp"
#include "tokprep/eval/metrics.hpp"
#include "tokprep/eval/sts.hpp"
#include "tokprep/eval/sweep.hpp"
#include "tokprep/model.hpp"
#include "tokprep/numerics.hpp"
#include "tokprep/parallel.hpp"
#include "tokprep/prompts.hpp"
#include "tokprep/tokenizer.hpp"
#include "tokprep/tp_config_io.hpp"
#include "tokprep/tp_engine.hpp"
#include "tokprep/weights_io.hpp"

namespace tokprep {
inline constexpr const char* kVersion = "0.1.0";
}

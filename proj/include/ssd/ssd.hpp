#pragma once

#include "ssd/config.hpp"
#include "ssd/ctc.hpp"
#include "ssd/data_io.hpp"
#include "ssd/error.hpp"
#include "ssd/experiments.hpp"
#include "ssd/metrics.hpp"
#include "ssd/models.hpp"
#include "ssd/pipeline.hpp"
#include "ssd/tokenizer.hpp"
#include "ssd/toy_models.hpp"
#include "ssd/verifier.hpp"

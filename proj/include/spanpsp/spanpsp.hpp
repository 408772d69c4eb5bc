#ifndef SPANPSP_SPANPSP_HPP
#define SPANPSP_SPANPSP_HPP

#include "spanpsp/utf8.hpp"
#include "spanpsp/prosody.hpp"
#include "spanpsp/text_format.hpp"
#include "spanpsp/tensor.hpp"
#include "spanpsp/chart.hpp"
#include "spanpsp/scorer.hpp"
#include "spanpsp/decoder.hpp"
#include "spanpsp/metrics.hpp"
#include "spanpsp/config.hpp"
#include "spanpsp/checkpoint.hpp"
#include "spanpsp/encoder.hpp"
#include "spanpsp/model.hpp"
#include "spanpsp/corpus.hpp"
#include "spanpsp/trainer.hpp"
#include "spanpsp/bench.hpp"

#endif  // SPANPSP_SPANPSP_HPP

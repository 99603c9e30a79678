#pragma once

#include "plm/checkpoint.hpp"
#include "plm/config.hpp"
#include "plm/csv.hpp"
#include "plm/decode.hpp"
#include "plm/error.hpp"
#include "plm/fsio.hpp"
#include "plm/grad_check.hpp"
#include "plm/gradients.hpp"
#include "plm/lstm.hpp"
#include "plm/manifest.hpp"
#include "plm/mask.hpp"
#include "plm/matrix.hpp"
#include "plm/model.hpp"
#include "plm/models.hpp"
#include "plm/ngram.hpp"
#include "plm/rng.hpp"
#include "plm/script.hpp"
#include "plm/sgd.hpp"
#include "plm/styleeval.hpp"
#include "plm/train.hpp"
#include "plm/transfer.hpp"
#include "plm/vocab.hpp"

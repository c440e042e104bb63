#pragma once

#include "nclm/checkpoint.hpp"
#include "nclm/config.hpp"
#include "nclm/corpus.hpp"
#include "nclm/embeddings.hpp"
#include "nclm/evalkit.hpp"
#include "nclm/log.hpp"
#include "nclm/model.hpp"
#include "nclm/nlm.hpp"
#include "nclm/ntm.hpp"
#include "nclm/rng.hpp"
#include "nclm/tape.hpp"
#include "nclm/tensor.hpp"
#include "nclm/topics.hpp"
#include "nclm/trainer.hpp"

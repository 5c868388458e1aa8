#pragma once

#include "rla/campaign.hpp"
#include "rla/chunker.hpp"
#include "rla/corpus.hpp"
#include "rla/errors.hpp"
#include "rla/generator.hpp"
#include "rla/metrics.hpp"
#include "rla/prompt.hpp"
#include "rla/reconstruction.hpp"
#include "rla/retriever.hpp"
#include "rla/text.hpp"

#pragma once

#include "adapt/core_types.hpp"
#include "adapt/error.hpp"
#include "adapt/eval.hpp"
#include "adapt/fusion.hpp"
#include "adapt/gaussian.hpp"
#include "adapt/io.hpp"
#include "adapt/iterative.hpp"
#include "adapt/knowledge_bank.hpp"
#include "adapt/online.hpp"
#include "adapt/parallel.hpp"
#include "adapt/synth.hpp"
#include "adapt/transductive.hpp"
#include "adapt/zeroshot.hpp"

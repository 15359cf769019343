// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/benchmark.hpp"
#include "caicl/episode.hpp"
#include "caicl/errors.hpp"
#include "caicl/formats.hpp"
#include "caicl/image.hpp"
#include "caicl/matcher.hpp"
#include "caicl/mock_vlm.hpp"
#include "caicl/palette.hpp"
#include "caicl/perception.hpp"
#include "caicl/prompts.hpp"
#include "caicl/remote_vlm.hpp"
#include "caicl/render.hpp"
#include "caicl/rng.hpp"
#include "caicl/run_config.hpp"
#include "caicl/scene.hpp"
#include "caicl/task.hpp"
#include "caicl/vlm.hpp"

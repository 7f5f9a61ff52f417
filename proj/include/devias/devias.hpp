#pragma once

#include "devias/augmentation.hpp"
#include "devias/checkpoint.hpp"
#include "devias/config.hpp"
#include "devias/dataset_io.hpp"
#include "devias/encoder.hpp"
#include "devias/errors.hpp"
#include "devias/evaluation.hpp"
#include "devias/gradcheck.hpp"
#include "devias/matching.hpp"
#include "devias/model.hpp"
#include "devias/objectives.hpp"
#include "devias/optim.hpp"
#include "devias/parallel.hpp"
#include "devias/pipeline.hpp"
#include "devias/report.hpp"
#include "devias/rng.hpp"
#include "devias/slots.hpp"
#include "devias/tape.hpp"
#include "devias/teacher.hpp"
#include "devias/tensor.hpp"
#include "devias/world.hpp"

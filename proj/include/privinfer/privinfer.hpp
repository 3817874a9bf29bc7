#pragma once

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"
#include "privinfer/wide_int.hpp"
#include "privinfer/poly_ring.hpp"
#include "privinfer/toy_he.hpp"
#include "privinfer/encodings.hpp"
#include "privinfer/mpc/share.hpp"
#include "privinfer/mpc/transcript.hpp"
#include "privinfer/mpc/channel.hpp"
#include "privinfer/mpc/dealer.hpp"
#include "privinfer/mpc/runtime.hpp"
#include "privinfer/linear_protocols.hpp"
#include "privinfer/approx.hpp"
#include "privinfer/secure_nonlinear.hpp"
#include "privinfer/tensor_io.hpp"
#include "privinfer/harness.hpp"

#pragma once

#include "mvalign/attention.hpp"
#include "mvalign/decoder.hpp"
#include "mvalign/depthaug.hpp"
#include "mvalign/errors.hpp"
#include "mvalign/geometry.hpp"
#include "mvalign/image.hpp"
#include "mvalign/metrics.hpp"
#include "mvalign/ops.hpp"
#include "mvalign/oracle.hpp"
#include "mvalign/rng.hpp"
#include "mvalign/synthscene.hpp"
#include "mvalign/tensor.hpp"
#include "mvalign/tensor_io.hpp"

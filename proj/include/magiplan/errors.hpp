/**********************************************************************************
 * Copyright (c) 2025-2026 SandAI. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *********************************************************************************/

#pragma once

#include <stdexcept>
#include <string>

namespace magiplan {

// Bad input: unparsable config, unknown field, out-of-range argument.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A named structural constraint is violated, e.g.
// "seqlen % (cp_size * dispatch_chunk_size) = 0".
class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

#define MAGIPLAN_INTERNAL_CHECK(cond, msg)                                   \
  do {                                                                       \
    if (!(cond)) {                                                           \
      throw std::logic_error(std::string("internal invariant failed: ") +   \
                             (msg) + " (" #cond ")");                        \
    }                                                                        \
  } while (0)

}  // namespace magiplan

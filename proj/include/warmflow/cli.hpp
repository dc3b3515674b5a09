// Copyright 2026 The WarmFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iostream>

namespace warmflow::cli {

// Returns the process exit code: 0 success, 2 usage/config errors, 1 other
// failures. Errors are printed to `err` as one JSON record.
int run(int argc, const char* const* argv, std::ostream& err = std::cerr);

}  // namespace warmflow::cli

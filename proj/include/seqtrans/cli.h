// Copyright 2026 The seqtrans Authors.
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

#ifndef SEQTRANS_CLI_H_
#define SEQTRANS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace seqtrans {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDiverged = 3,
};

// Runs `seqtrans <command> [--key=value ...]`; args excludes the program
// name. Never throws; errors are reported on `err` and mapped to ExitCode.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace seqtrans

#endif  // SEQTRANS_CLI_H_

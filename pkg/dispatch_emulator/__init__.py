# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.

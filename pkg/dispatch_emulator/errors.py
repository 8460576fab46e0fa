# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.


class DispatchEmulatorError(Exception):
    exit_code = 3


class UsageError(DispatchEmulatorError):
    exit_code = 1


class DataError(DispatchEmulatorError):
    exit_code = 2


class InvariantViolation(DispatchEmulatorError):
    exit_code = 3

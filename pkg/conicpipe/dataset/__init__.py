# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# Copyright (c) Microsoft Corporation. All rights reserved.
# Licensed under the MIT License.

# `microsoft` is shared with other distributions; extend its path instead of owning it.
__path__ = __import__('pkgutil').extend_path(__path__, __name__)

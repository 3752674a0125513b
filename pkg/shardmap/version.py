__all__ = ["version", "version_info"]


version = "0.1.0b1"
version_info = (0, 1, 0, "beta", 1)
# version_info has the same format as django.VERSION
# https://github.com/django/django/blob/4a5048b036fd9e965515e31fdd70b0af72655cba/django/utils/version.py#L22
#
# examples
# "0.1.0" -> (0, 1, 0, "final", 0)
# "0.1.0rc1" -> (0, 1, 0, "rc", 1)
# "0.1.0b1" -> (0, 1, 0, "beta", 1)
# "0.1.0a2" -> (0, 1, 0, "alpha", 2)
#
# also see tests/test_version.py

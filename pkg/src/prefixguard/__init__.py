"""Detect BGP prefix hijacks against your own prefixes and mitigate them by de-aggregation."""

from .prefix import AsPath, IpPrefix, contains, deaggregate, parse_prefix

__version__ = "0.1.0"

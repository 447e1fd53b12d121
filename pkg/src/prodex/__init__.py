"""prodex: schema-constrained product data extraction from shop pages.

Two strategies over template-based product pages: direct per-page structured
LLM extraction, and indirect extraction through generated, refinable
extraction programs that run locally. Ships a synthetic corpus generator and
replay/oracle providers so every pipeline is testable offline.
"""

__version__ = "0.1.0"

"""Sup, Cramer-von Mises and Anderson-Darling functionals"""

from k2gof.stats.functionals import STAT_KINDS, StatTriple, stat_ad, stat_cvm, stat_sup, stat_triple

__all__ = ["STAT_KINDS", "StatTriple", "stat_ad", "stat_cvm", "stat_sup", "stat_triple"]

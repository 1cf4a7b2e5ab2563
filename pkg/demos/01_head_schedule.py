"""
Which head acts when
====================

A multi-head policy splits an episode of T steps into k contiguous blocks
and hands each block to its own output head.
"""

import numpy as np

from chronoskill import select_head
from chronoskill.policy import head_schedule

# T = 100 steps shared by 20 heads: five steps each
print([select_head(t, 100, 20) for t in range(12)])

# uneven splits give blocks of floor(T/k) or ceil(T/k) steps
js = head_schedule(np.arange(7), 7, 3)
print(js, np.bincount(js))

# the manipulation tasks use k = 8 over T = 100, so blocks of 12 or 13 steps
print(np.bincount(head_schedule(np.arange(100), 100, 8)))

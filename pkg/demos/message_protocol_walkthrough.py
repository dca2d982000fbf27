"""Walk through the update-message protocol one step at a time.

An app never shares raw predictions. It quantizes its estimated
infectiousness history into 16 levels, and whenever a day's level changes
it sends that day's new level to the partners met that day, addressed by
rotating tokens. Receivers only ever see (level, repeat count) clusters.
"""

import numpy as np

from pctsim.messaging import (
    DEFAULT_THRESHOLDS,
    cluster_inbox,
    diff_and_emit,
    pack_message,
    quantize_risk,
    unpack_message,
)

# 1. quantization: 15 cut points split [0, 1] into 16 risk levels
for y in (0.0, 0.05, 0.47, 0.93):
    print(f"y_hat {y:.2f} -> level {quantize_risk(y, DEFAULT_THRESHOLDS)}")
print()

# 2. a three-day window: yesterday's estimate vs today's new estimate.
# slot k covers absolute day (today - k), newest first. slot 0 moves but
# stays inside its bin (silent); slot 1 (day 11) crosses cut points.
today = 12
prev = np.array([0.15, 0.40, 0.05])
new = np.array([0.16, 0.65, 0.05])

contact_book = {11: {9111: 1, 9222: 2}, 12: {9333: 1}}  # day -> partner tokens
own_tokens = {10: 501, 11: 511, 12: 521}  # my rotating token each day

messages = diff_and_emit(prev, new, contact_book, DEFAULT_THRESHOLDS,
                         day=today, own_tokens=own_tokens)
print(f"levels {quantize_risk(prev, DEFAULT_THRESHOLDS)} -> "
      f"{quantize_risk(new, DEFAULT_THRESHOLDS)}")
print(f"emitted {len(messages)} messages (one per partner on the changed day):")
for recipient, msg in messages:
    print(f"  to token {recipient}: day {msg.encounter_day} "
          f"level {msg.risk_level} from my token {msg.sender_token}")
print()

# 3. nine bytes on the wire: 64-bit token, 4-bit day offset, 4-bit level
_, msg = messages[0]
wire = pack_message(msg, today)
print(f"wire record: {wire.hex()} ({len(wire)} bytes)")
print(f"round-trip:  {unpack_message(wire, today)}")
print()

# 4. the receiver clusters an inbox into (level, count) pairs per day;
# the same token repeating collapses, distinct tokens stay separate
inbox = [m for _r, m in messages] * 2
clustered = cluster_inbox(inbox)
for day, pairs in sorted(clustered.items()):
    print(f"day {day}: clustered pairs {pairs}")
print("\nno partner identity survives clustering, only levels and counts")

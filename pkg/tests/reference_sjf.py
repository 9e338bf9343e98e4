"""Independent non-preemptive shortest-job-first reference.

Deliberately minimal and structured differently from the package's event
loop; used to pin the no-aging policy behavior.
"""


def sjf_completion_order(taus, sizes, rate=1.0):
    """Indices in order of service completion under plain SJF.

    Smallest size first among waiting jobs, FIFO on ties; arrivals at a
    completion instant join before the next pick.
    """
    n = len(taus)
    waiting = []
    order = []
    clock = 0.0
    nxt = 0
    while len(order) < n:
        if not waiting:
            clock = max(clock, taus[nxt])
        while nxt < n and taus[nxt] <= clock:
            waiting.append(nxt)
            nxt += 1
        pick = min(waiting, key=lambda k: (sizes[k], k))
        waiting.remove(pick)
        clock += sizes[pick] / rate
        order.append(pick)
        while nxt < n and taus[nxt] <= clock:
            waiting.append(nxt)
            nxt += 1
    return order

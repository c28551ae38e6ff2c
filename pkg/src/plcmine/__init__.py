"""Black-box PLC logic reconstruction from tapped IO recordings.

Pipeline: drive a simulated tank plant with a ladder-logic program while
tapping every input/output, convert the tap to an event log, discover a
class-labeled Petri net, train a decay-replay next-activity classifier for
ambiguous markings, and run the result as a substitute closed-loop controller.
"""

__version__ = "0.1.0"

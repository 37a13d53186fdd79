"""meterwatch: detecting inaccurate electricity submeters from daily usage.

A residential area is metered by one master meter and many submeters. The
package simulates such areas, predicts the daily residual error between the
master and the submeter sum with a recurrent network, flags malfunction by
sustained prediction-error exceedance, and classifies individual submeters
with a dual-input convolutional network over the raw series and its
recurrence plot.
"""

__version__ = "0.1.0"

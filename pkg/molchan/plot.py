# MolChan Plot Module
# -*- coding: utf-8 -*-
"""
 Static SVG line charts of response curves

 Functions
    line_chart(series, title, x_label, y_label, log_y)  # SVG root element
    save_chart(path, svg)                               # Write an SVG file

 series is a sequence of (label, times, values), one or two curves.

"""

# Modules
import logging
import math
import xml.etree.ElementTree as ET

from .core import InputError

log = logging.getLogger(__name__)

WIDTH = 640
HEIGHT = 400
MARGIN = 60
TICKS = 5
COLORS = ('#1f77b4', '#d62728')


def _num(value):
    return '%.2f' % value

def _svgroot(w, h):
    return ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      version="1.1",
                      width="{}px".format(w),
                      height="{}px".format(h),
                      viewBox="0 0 {} {}".format(w, h))

def _text(parent, x, y, label, anchor='middle', **extra):
    node = ET.SubElement(parent, "text", x=_num(x), y=_num(y), attrib={'text-anchor': anchor}, **extra)
    node.text = label
    return node

def _path(parent, points, color):
    d = "M{} {}".format(_num(points[0][0]), _num(points[0][1]))
    for x, y in points[1:]:
        d += "L{} {}".format(_num(x), _num(y))
    return ET.SubElement(parent, "path", d=d, fill="none", stroke=color, attrib={'stroke-width': '1.5'})

def _bounds(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi

def line_chart(series, title='', x_label='time (s)', y_label='response', log_y=False):
    """
    Build a chart with axes, tick labels, one path per curve and a legend.

    log_y plots log10 of the values and drops non-positive points.
    """
    series = list(series)
    if not 1 <= len(series) <= len(COLORS):
        raise InputError('a chart takes 1 or %d curves, got %d' % (len(COLORS), len(series)))
    curves = []
    for label, xs, ys in series:
        points = [(float(x), float(y)) for x, y in zip(xs, ys)]
        if log_y:
            points = [(x, math.log10(y)) for x, y in points if y > 0]
        if not points:
            raise InputError('curve %r has no plottable points' % label)
        curves.append((label, points))

    x_lo, x_hi = _bounds([x for _, pts in curves for x, _ in pts])
    y_lo, y_hi = _bounds([y for _, pts in curves for _, y in pts])
    plot_w, plot_h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * plot_h

    svg = _svgroot(WIDTH, HEIGHT)
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    axes = ET.SubElement(svg, "g", stroke="black")
    ET.SubElement(axes, "line", x1=_num(MARGIN), y1=_num(HEIGHT - MARGIN), x2=_num(WIDTH - MARGIN), y2=_num(HEIGHT - MARGIN))
    ET.SubElement(axes, "line", x1=_num(MARGIN), y1=_num(MARGIN), x2=_num(MARGIN), y2=_num(HEIGHT - MARGIN))

    labels = ET.SubElement(svg, "g", attrib={'font-family': 'sans-serif', 'font-size': '11'})
    for k in range(TICKS + 1):
        x = x_lo + (x_hi - x_lo) * k / TICKS
        y = y_lo + (y_hi - y_lo) * k / TICKS
        _text(labels, sx(x), HEIGHT - MARGIN + 16, '%.4g' % x)
        _text(labels, MARGIN - 6, sy(y) + 4, ('1e%.2g' % y) if log_y else ('%.4g' % y), anchor='end')
    _text(labels, WIDTH / 2.0, HEIGHT - 15, x_label)
    _text(labels, 15, HEIGHT / 2.0, y_label + (' (log10)' if log_y else ''),
          transform='rotate(-90 15 %s)' % _num(HEIGHT / 2.0))
    if title:
        _text(labels, WIDTH / 2.0, MARGIN / 2.0, title)

    for k, (label, points) in enumerate(curves):
        _path(svg, [(sx(x), sy(y)) for x, y in points], COLORS[k])
        _text(labels, WIDTH - MARGIN - 5, MARGIN + 15 * (k + 1), label, anchor='end', fill=COLORS[k])
    return svg

def save_chart(path, svg):
    log.debug("writing chart %s", path)
    ET.ElementTree(svg).write(path, encoding='utf-8', xml_declaration=True)

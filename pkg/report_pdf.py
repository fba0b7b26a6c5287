from reportlab import rl_config
from reportlab.lib.colors import HexColor, black, white
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from monitoring import monitoring

# Fixed creation dates and document ids so reruns give identical bytes
rl_config.invariant = 1

MAX_TABLE_ROWS = 40


class PDFReportGenerator:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self.setup_custom_styles()

    def setup_custom_styles(self):
        """Setup custom styles for PDF"""
        self.styles.add(ParagraphStyle(
            name='CustomTitle',
            parent=self.styles['Heading1'],
            fontSize=18,
            spaceAfter=30,
            textColor=HexColor('#2E8B57'),
            alignment=1
        ))
        self.styles.add(ParagraphStyle(
            name='SectionHeader',
            parent=self.styles['Heading2'],
            fontSize=14,
            spaceBefore=20,
            spaceAfter=10,
            textColor=HexColor('#4682B4'),
            leftIndent=20
        ))

    def _table(self, rows, widths):
        table = Table(rows, colWidths=widths)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), HexColor('#4682B4')),
            ('TEXTCOLOR', (0, 0), (-1, 0), white),
            ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, 0), 10),
            ('BOTTOMPADDING', (0, 0), (-1, 0), 12),
            ('GRID', (0, 0), (-1, -1), 1, black),
            ('FONTSIZE', (0, 1), (-1, -1), 9),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [white, HexColor('#F0F8FF')])
        ]))
        return table

    def _fields(self, story, pairs):
        for label, value in pairs:
            story.append(Paragraph(f"<b>{label}:</b> {value}", self.styles['Normal']))

    def _manifest(self, story, manifest):
        if not manifest:
            return
        story.append(Paragraph("RUN", self.styles['SectionHeader']))
        self._fields(story, sorted(manifest.items()))

    def _transcript_story(self, data, story):
        config = data["config"]
        story.append(Paragraph(f"Query transcript ({config['mode']} mode)", self.styles['CustomTitle']))
        self._fields(story, [
            ("POIs", len(config["pois"])), ("Window t", config["t"]), ("k", config["k_nn"]),
            ("Comparison bits l", data["derived"]["l"]), ("Messages", len(data["messages"]))
        ])
        story.append(Paragraph("COMPARISONS", self.styles['SectionHeader']))
        rows = [['Pair', 'd_a', 'd_b', 'Decision', 'Truth']]
        for c in data["comparisons"][:MAX_TABLE_ROWS]:
            rows.append([f"{c['pair'][0]}-{c['pair'][1]}", str(c["d_a"]), str(c["d_b"]),
                         "d_a >= d_b" if c["decision"] else "d_a < d_b", "ok" if c["decision"] == c["truth"] else "WRONG"])
        story.append(self._table(rows, [0.8 * inch, 1.5 * inch, 1.5 * inch, 1.3 * inch, 0.9 * inch]))
        story.append(Paragraph("RESPONSE", self.styles['SectionHeader']))
        self._fields(story, [("Returned", data["response"]["indices"]), ("Truth", data["sidecar"]["knn"])])

    def _flaw_story(self, data, story):
        story.append(Paragraph("Comparison flaw measurement", self.styles['CustomTitle']))
        setting = data["setting"]
        self._fields(story, [
            ("m", setting["m"]), ("l", setting["l"]), ("k_sec", setting["k_sec"]), ("Trials", data["trials"]),
            ("Measured agreement", f"{data['agreement_rate']:.4f}"),
            ("Exact agreement", "n/a" if data["exact_agreement_rate"] is None else f"{data['exact_agreement_rate']:.4f}")
        ])
        example = data["worked_example"]
        story.append(Paragraph("COLLISION", self.styles['SectionHeader']))
        rows = [['z', 'w', 'w_bar', 'rho_bar', 'MSB']]
        rows.append([str(example["z0"]), str(example["w0"]), str(example["w_bar"]), str(example["rho_bar"]), "0"])
        rows.append([str(example["z1"]), str(example["w1"]), str(example["w_bar"]), str(example["rho_bar"]), "1"])
        story.append(self._table(rows, [1.2 * inch] * 5))

    def _recovery_story(self, data, story):
        story.append(Paragraph(f"Location recovery ({data['mode']})", self.styles['CustomTitle']))
        self._fields(story, [
            ("Virtual location (scaled)", data["virtual_location_scaled"]),
            ("User location", "virtual only" if data["virtual_only"] else data["user_location"]),
            ("Candidates", data["candidate_count"]), ("Unique", data["unique"])
        ])
        if data.get("matches"):
            story.append(Paragraph("GROUND TRUTH", self.styles['SectionHeader']))
            self._fields(story, sorted(data["matches"].items()))

    def _unmask_story(self, data, story):
        story.append(Paragraph("Mask candidates", self.styles['CustomTitle']))
        rows = [['z', 'Count', 'Candidates']]
        for entry in data["results"][:MAX_TABLE_ROWS]:
            shown = ", ".join(str(c) for c in entry["candidates"][:12])
            rows.append([str(entry["z"]), str(len(entry["candidates"])), shown])
        story.append(self._table(rows, [1.5 * inch, 0.8 * inch, 4.2 * inch]))

    def generate_report(self, data, path):
        """Render a transcript or attack report to a PDF file"""
        kind = data.get("format_version", "").split("/")[0].split(".")[-1]
        builders = {
            "transcript": self._transcript_story,
            "flaw": self._flaw_story,
            "recovery": self._recovery_story,
            "locate": self._recovery_story,
            "unmask": self._unmask_story
        }
        if kind not in builders:
            raise ValueError(f"no PDF layout for format '{data.get('format_version')}'")

        doc = SimpleDocTemplate(path, pagesize=A4, rightMargin=72, leftMargin=72, topMargin=72, bottomMargin=18)
        story = []
        builders[kind](data, story)
        story.append(Spacer(1, 20))
        self._manifest(story, data.get("manifest"))
        doc.build(story)
        monitoring.logger.info(f"PDF report written: {path}")
        return path


# Global PDF generator
pdf_generator = PDFReportGenerator()

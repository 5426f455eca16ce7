/** Draggable before/after comparison slider: two stacked images, the top one
 * clipped at an adjustable x position. */

export interface CompareSlider {
  root: HTMLElement;
  setPosition(fraction: number): void;
  setImages(beforeUrl: string, afterUrl: string): void;
}

export function createCompareSlider(doc: Document = document): CompareSlider {
  const root = doc.createElement("div");
  root.className = "compare-slider";

  const before = doc.createElement("img");
  before.className = "compare-before";
  before.alt = "before";
  const after = doc.createElement("img");
  after.className = "compare-after";
  after.alt = "after";
  const divider = doc.createElement("div");
  divider.className = "compare-divider";
  const range = doc.createElement("input");
  range.type = "range";
  range.min = "0";
  range.max = "100";
  range.value = "50";
  range.className = "compare-range";
  range.setAttribute("aria-label", "before/after position");

  root.append(before, after, divider, range);

  const apply = (fraction: number) => {
    const pct = Math.round(fraction * 100);
    after.style.clipPath = `inset(0 0 0 ${pct}%)`;
    divider.style.left = `${pct}%`;
    range.value = String(pct);
  };
  range.addEventListener("input", () => apply(Number(range.value) / 100));
  apply(0.5);

  return {
    root,
    setPosition: apply,
    setImages(beforeUrl: string, afterUrl: string) {
      before.src = beforeUrl;
      after.src = afterUrl;
    },
  };
}

import { describe, expect, it } from "vitest";

import { UndoStack } from "../src/history";

describe("UndoStack", () => {
  it("undoes back to the initial state", () => {
    const s = new UndoStack<number>(0);
    s.push(1);
    expect(s.undo()).toBe(0);
    expect(s.canUndo()).toBe(false);
  });

  it("supports at least 20 levels", () => {
    const s = new UndoStack<number>(0);
    for (let i = 1; i <= 25; i++) s.push(i);
    for (let i = 0; i < 20; i++) {
      expect(s.undo()).not.toBeNull();
    }
  });

  it("redo replays undone states", () => {
    const s = new UndoStack<string>("a");
    s.push("b");
    s.push("c");
    expect(s.undo()).toBe("b");
    expect(s.redo()).toBe("c");
    expect(s.canRedo()).toBe(false);
  });

  it("push after undo truncates the redo branch", () => {
    const s = new UndoStack<string>("a");
    s.push("b");
    s.undo();
    s.push("c");
    expect(s.canRedo()).toBe(false);
    expect(s.undo()).toBe("a");
    expect(s.redo()).toBe("c");
  });

  it("rejects sub-20 limits", () => {
    expect(() => new UndoStack(0, 5)).toThrow(/>= 20/);
  });
});
